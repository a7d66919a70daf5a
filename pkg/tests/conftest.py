import sys
from pathlib import Path

# make sibling helper modules (oracles, fixtures) importable
sys.path.insert(0, str(Path(__file__).parent))
