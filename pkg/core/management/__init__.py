# Management package 