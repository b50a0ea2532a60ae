from pathlib import Path

GOLDEN_DIR = Path(__file__).resolve().parent / 'golden'
