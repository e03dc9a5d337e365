"""Fit a threshold classifier on the training points and save it to model.json."""
import json

TRAIN = [(0.5, 0), (1.0, 0), (1.5, 0), (2.0, 0), (2.5, 1), (3.0, 1), (3.5, 1), (4.0, 1)]
CANDIDATES = [0.0, 0.75, 1.25, 1.75, 2.25, 2.75, 3.25]
SEARCH_STEPS = 2


def accuracy(threshold, points):
    return sum((x > threshold) == bool(y) for x, y in points) / len(points)


best = max(CANDIDATES[:SEARCH_STEPS], key=lambda t: accuracy(t, TRAIN))
with open("model.json", "w") as f:
    json.dump({"threshold": best}, f)
print(f"threshold={best} train_accuracy={accuracy(best, TRAIN):.4f}")
