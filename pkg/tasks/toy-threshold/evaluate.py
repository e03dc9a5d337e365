"""Score a workspace: accuracy of model.json's threshold on held-out points."""
import json
import sys
from pathlib import Path

TEST = [
    (0.3, 0), (0.8, 0), (1.2, 0), (1.8, 0), (2.2, 0),
    (2.6, 1), (3.1, 1), (3.6, 1), (3.9, 1), (4.2, 1),
]

workspace = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(".")
model_path = workspace / "model.json"
if not model_path.is_file():
    sys.exit("model.json not found; run train.py first")

threshold = json.loads(model_path.read_text())["threshold"]
correct = sum((x > threshold) == bool(y) for x, y in TEST)
print(f"{correct / len(TEST):.4f}")
