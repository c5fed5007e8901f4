"""Task generators, encodings, and scoring.

Three desk-scale task families:

* blobs: grayscale images of four shape classes (disc, bar, cross, ring)
  with center jitter and pixel noise; classification.
* maze: random wall scatter on a grid with a guaranteed start->goal route;
  the target is the cell mask of the breadth-first shortest path
  (deterministic neighbor order: up, down, left, right).
* shidoku: 4x4 board filling with all-different rows, columns, and 2x2
  boxes; instances have 6..10 given cells and a unique solution.

Every generator is a pure function of its parameters and seed, drawing
from per-instance named substreams, so datasets can be regenerated
anywhere without stored files. JSONL serialization carries an explicit
schema_version on every line.
"""

from __future__ import annotations

import json
from collections import deque

import numpy as np

from .errors import ConfigError, GenerationError, ShapeError
from .rng import stream

__all__ = [
    "gen_blobs", "gen_maze", "gen_shidoku",
    "shortest_path", "maze_prediction_ok",
    "shidoku_solutions", "count_solutions",
    "encode_batch", "predictions_from_output", "score_predictions",
    "task_shapes", "write_jsonl", "read_jsonl",
]

SCHEMA_VERSION = 1
BLOB_KINDS = ("disc", "bar", "cross", "ring")

# neighbor order fixed everywhere: up, down, left, right
_STEPS = ((-1, 0), (1, 0), (0, -1), (0, 1))


# ---------------------------------------------------------------------------
# blobs
# ---------------------------------------------------------------------------


def _draw_shape(kind: str, size: int, cy: float, cx: float) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    dy, dx = yy - cy, xx - cx
    r = np.hypot(dy, dx)
    unit = size / 16.0
    if kind == "disc":
        return (r <= 4.0 * unit).astype(np.float64)
    if kind == "bar":
        return ((np.abs(dy) <= 1.5 * unit) & (np.abs(dx) <= 5.0 * unit)).astype(np.float64)
    if kind == "cross":
        horiz = (np.abs(dy) <= 1.2 * unit) & (np.abs(dx) <= 4.5 * unit)
        vert = (np.abs(dx) <= 1.2 * unit) & (np.abs(dy) <= 4.5 * unit)
        return (horiz | vert).astype(np.float64)
    if kind == "ring":
        return ((r >= 2.5 * unit) & (r <= 4.5 * unit)).astype(np.float64)
    raise ConfigError(f"unknown blob kind '{kind}'")


def gen_blobs(n: int, *, size: int = 16, jitter: float = 2.0,
              noise: float = 0.05, seed: int = 0) -> list:
    """n images cycling through the four classes in fixed order.

    Pixel values are clamped to [0, 1] after adding Gaussian noise.
    """
    if n < 0 or size < 8:
        raise ConfigError(f"need n >= 0 and size >= 8, got n={n} size={size}")
    out = []
    for i in range(n):
        rng = stream(f"blobs/{i}", seed)
        label = i % len(BLOB_KINDS)
        cy = size / 2.0 - 0.5 + rng.uniform(-jitter, jitter)
        cx = size / 2.0 - 0.5 + rng.uniform(-jitter, jitter)
        img = _draw_shape(BLOB_KINDS[label], size, cy, cx)
        img = img + rng.normal(0.0, noise, img.shape)
        img = np.clip(img, 0.0, 1.0)
        out.append({"image": img, "label": label})
    return out


# ---------------------------------------------------------------------------
# maze
# ---------------------------------------------------------------------------


def shortest_path(grid: np.ndarray, start: tuple, goal: tuple):
    """Breadth-first shortest path as a list of cells, or None.

    Neighbors expand in the fixed order up, down, left, right, so the
    returned path is unique for a given maze.
    """
    grid = np.asarray(grid)
    h, w = grid.shape
    start, goal = tuple(start), tuple(goal)
    for cell in (start, goal):
        if not (0 <= cell[0] < h and 0 <= cell[1] < w) or grid[cell]:
            return None
    parent = {start: None}
    queue = deque([start])
    while queue:
        cell = queue.popleft()
        if cell == goal:
            path = []
            while cell is not None:
                path.append(cell)
                cell = parent[cell]
            return path[::-1]
        for dr, dc in _STEPS:
            nxt = (cell[0] + dr, cell[1] + dc)
            if (0 <= nxt[0] < h and 0 <= nxt[1] < w and not grid[nxt]
                    and nxt not in parent):
                parent[nxt] = cell
                queue.append(nxt)
    return None


def _try_maze(height: int, width: int, wall_density: float, rng) -> dict | None:
    grid = (rng.random((height, width)) < wall_density).astype(np.int8)
    open_cells = [(int(r), int(c)) for r, c in np.argwhere(grid == 0)]
    if len(open_cells) < 2:
        return None
    picks = rng.choice(len(open_cells), size=2, replace=False)
    start, goal = open_cells[picks[0]], open_cells[picks[1]]
    path = shortest_path(grid, start, goal)
    if path is None or len(path) < 2:
        return None
    return {"grid": grid, "start": start, "goal": goal, "path": path}


def gen_maze(n: int, *, height: int = 9, width: int = 9,
             wall_density: float = 0.25, seed: int = 0,
             max_attempts: int = 2000) -> list:
    """n solvable mazes; every instance stores its shortest path."""
    if not 0.0 <= wall_density < 1.0:
        raise ConfigError(f"wall_density must be in [0, 1), got {wall_density}")
    if height < 2 or width < 2:
        raise ConfigError(f"maze needs at least a 2x2 grid, got {height}x{width}")
    out = []
    for i in range(n):
        inst = None
        for attempt in range(max_attempts):
            rng = stream(f"maze/{i}/{attempt}", seed)
            inst = _try_maze(height, width, wall_density, rng)
            if inst is not None:
                break
        if inst is None:
            raise GenerationError(
                f"maze {i}: no solvable instance in {max_attempts} attempts"
            )
        out.append(inst)
    return out


def maze_prediction_ok(instance: dict, pred_mask: np.ndarray) -> bool:
    """True iff the predicted cell mask is exactly an optimal path.

    Requirements: only open cells (a wall in the mask fails outright),
    start and goal included, goal reachable from start inside the mask,
    and both the mask size and the in-mask distance equal the true
    shortest-path length. Any optimal route counts, not just the stored
    one.
    """
    grid = np.asarray(instance["grid"])
    mask = np.asarray(pred_mask).astype(bool)
    if mask.shape != grid.shape:
        raise ShapeError(f"mask {mask.shape} does not match grid {grid.shape}")
    start, goal = tuple(instance["start"]), tuple(instance["goal"])
    opt = len(instance["path"])
    if np.any(mask & (grid == 1)):
        return False
    if not (mask[start] and mask[goal]):
        return False
    if int(mask.sum()) != opt:
        return False
    blocked = np.where(mask, grid, 1)  # restrict search to masked cells
    inside = shortest_path(blocked, start, goal)
    return inside is not None and len(inside) == opt


# ---------------------------------------------------------------------------
# shidoku
# ---------------------------------------------------------------------------


def _box_of(r: int, c: int) -> int:
    return (r // 2) * 2 + (c // 2)


def _conflicts(board: np.ndarray, r: int, c: int, digit: int) -> bool:
    if digit in board[r, :] or digit in board[:, c]:
        return True
    br, bc = (r // 2) * 2, (c // 2) * 2
    return digit in board[br:br + 2, bc:bc + 2]


def count_solutions(board: np.ndarray, limit: int = 2) -> int:
    """Count completions by backtracking (first blank, digits ascending),
    stopping at `limit`."""
    board = np.array(board, dtype=np.int8)

    def rec(b) -> int:
        blanks = np.argwhere(b == 0)
        if len(blanks) == 0:
            return 1
        r, c = blanks[0]
        found = 0
        for digit in range(1, 5):
            if not _conflicts(b, r, c, digit):
                b[r, c] = digit
                found += rec(b)
                b[r, c] = 0
                if found >= limit:
                    break
        return found

    return rec(board)


_SOLUTIONS_CACHE: list | None = None


def shidoku_solutions() -> list:
    """All complete 4x4 boards, enumerated once and cached (there are 288)."""
    global _SOLUTIONS_CACHE
    if _SOLUTIONS_CACHE is None:
        sols = []

        def rec(b, idx):
            if idx == 16:
                sols.append(b.copy())
                return
            r, c = divmod(idx, 4)
            for digit in range(1, 5):
                if not _conflicts(b, r, c, digit):
                    b[r, c] = digit
                    rec(b, idx + 1)
                    b[r, c] = 0

        rec(np.zeros((4, 4), dtype=np.int8), 0)
        _SOLUTIONS_CACHE = sols
    return _SOLUTIONS_CACHE


def gen_shidoku(n: int, *, givens_min: int = 6, givens_max: int = 10,
                seed: int = 0, max_attempts: int = 2000) -> list:
    """n puzzles with unique solutions and the stated given-count range."""
    if not 4 <= givens_min <= givens_max <= 16:
        raise ConfigError(
            f"given counts must satisfy 4 <= min <= max <= 16, got "
            f"{givens_min}..{givens_max}"
        )
    solutions = shidoku_solutions()
    out = []
    for i in range(n):
        inst = None
        for attempt in range(max_attempts):
            rng = stream(f"shidoku/{i}/{attempt}", seed)
            solution = solutions[int(rng.integers(len(solutions)))]
            k = int(rng.integers(givens_min, givens_max + 1))
            cells = rng.choice(16, size=k, replace=False)
            givens = np.zeros((4, 4), dtype=np.int8)
            for cell in cells:
                r, c = divmod(int(cell), 4)
                givens[r, c] = solution[r, c]
            if count_solutions(givens, limit=2) == 1:
                inst = {"givens": givens, "solution": solution.copy()}
                break
        if inst is None:
            raise GenerationError(
                f"shidoku {i}: no unique puzzle in {max_attempts} attempts"
            )
        out.append(inst)
    return out


# ---------------------------------------------------------------------------
# encoding and scoring
# ---------------------------------------------------------------------------


def task_shapes(kind: str, instances: list) -> dict:
    """Input geometry for a dataset: size, channels, labels."""
    if kind == "blobs":
        size = np.asarray(instances[0]["image"]).shape
        return {"input_size": size, "input_channels": 1,
                "head": "classifier", "head_out": len(BLOB_KINDS)}
    if kind == "maze":
        size = np.asarray(instances[0]["grid"]).shape
        return {"input_size": size, "input_channels": 4,
                "head": "per_cell", "head_out": 2}
    if kind == "shidoku":
        return {"input_size": (4, 4), "input_channels": 5,
                "head": "per_cell", "head_out": 4}
    raise ConfigError(f"unknown task kind '{kind}'")


def encode_batch(kind: str, instances: list) -> tuple:
    """Model-facing arrays: (inputs, labels, loss mask or None)."""
    if kind == "blobs":
        imgs = np.stack([np.asarray(i["image"], dtype=np.float32) for i in instances])
        x = imgs[..., None]
        y = np.array([i["label"] for i in instances], dtype=np.int64)
        return x, y, None
    if kind == "maze":
        xs, ys = [], []
        for inst in instances:
            grid = np.asarray(inst["grid"], dtype=np.float32)
            start_ch = np.zeros_like(grid)
            goal_ch = np.zeros_like(grid)
            start_ch[tuple(inst["start"])] = 1.0
            goal_ch[tuple(inst["goal"])] = 1.0
            xs.append(np.stack([grid, 1.0 - grid, start_ch, goal_ch], axis=-1))
            mask = np.zeros(grid.shape, dtype=np.int64)
            for cell in inst["path"]:
                mask[tuple(cell)] = 1
            ys.append(mask)
        x = np.stack(xs)
        y = np.stack(ys)
        return x, y, np.ones(y.shape, dtype=np.float32)
    if kind == "shidoku":
        xs, ys, ms = [], [], []
        for inst in instances:
            givens = np.asarray(inst["givens"], dtype=np.int64)
            x = np.zeros((4, 4, 5), dtype=np.float32)
            for r in range(4):
                for c in range(4):
                    x[r, c, givens[r, c]] = 1.0  # channel 0 = blank
            xs.append(x)
            ys.append(np.asarray(inst["solution"], dtype=np.int64) - 1)
            ms.append((givens == 0).astype(np.float32))
        return np.stack(xs), np.stack(ys), np.stack(ms)
    raise ConfigError(f"unknown task kind '{kind}'")


def predictions_from_output(kind: str, instances: list,
                            output: np.ndarray) -> list:
    """Head output -> per-instance prediction arrays.

    Boards get their given cells overwritten with the known digits (they
    are inputs, not predictions)."""
    preds = []
    out = np.asarray(output)
    if kind == "blobs":
        return [int(k) for k in out.argmax(axis=-1)]
    for i, inst in enumerate(instances):
        arg = out[i].argmax(axis=-1)
        if kind == "shidoku":
            digits = arg + 1
            givens = np.asarray(inst["givens"])
            digits = np.where(givens > 0, givens, digits)
            preds.append(digits.astype(np.int64))
        elif kind == "maze":
            preds.append((arg == 1).astype(np.int64))
        else:
            raise ConfigError(f"unknown task kind '{kind}'")
    return preds


def score_predictions(kind: str, instances: list, predictions: list) -> tuple:
    """(accuracy, per-instance correctness flags)."""
    flags = []
    for inst, pred in zip(instances, predictions):
        if kind == "blobs":
            flags.append(int(pred) == int(inst["label"]))
        elif kind == "shidoku":
            flags.append(bool(np.array_equal(pred, np.asarray(inst["solution"]))))
        elif kind == "maze":
            flags.append(maze_prediction_ok(inst, pred))
        else:
            raise ConfigError(f"unknown task kind '{kind}'")
    acc = float(np.mean(flags)) if flags else 0.0
    return acc, flags


# ---------------------------------------------------------------------------
# JSONL
# ---------------------------------------------------------------------------


def _jsonable(val):
    if isinstance(val, np.ndarray):
        return val.tolist()
    if isinstance(val, np.integer):
        return int(val)
    if isinstance(val, np.floating):
        return float(val)
    if isinstance(val, (list, tuple)):
        return [_jsonable(v) for v in val]
    return val


def _to_jsonable(inst: dict) -> dict:
    return {key: _jsonable(val) for key, val in inst.items()}


def write_jsonl(path, kind: str, instances: list) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            doc = {"schema_version": SCHEMA_VERSION, "kind": kind}
            doc.update(_to_jsonable(inst))
            fh.write(json.dumps(doc) + "\n")


def read_jsonl(path) -> tuple:
    """Load (kind, instances) from a dataset file, checking the schema."""
    instances = []
    kind = None
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            doc = json.loads(line)
            if doc.get("schema_version") != SCHEMA_VERSION:
                raise ConfigError(
                    f"{path}:{line_no}: unsupported schema_version "
                    f"{doc.get('schema_version')!r}"
                )
            if kind is None:
                kind = doc.get("kind")
            elif doc.get("kind") != kind:
                raise ConfigError(f"{path}:{line_no}: mixed task kinds in one file")
            inst = {k: v for k, v in doc.items()
                    if k not in ("schema_version", "kind")}
            instances.append(_normalize_instance(kind, inst))
    if kind is None:
        raise ConfigError(f"{path}: empty dataset file")
    return kind, instances


def _normalize_instance(kind: str, inst: dict) -> dict:
    if kind == "blobs":
        return {"image": np.asarray(inst["image"], dtype=np.float64),
                "label": int(inst["label"])}
    if kind == "maze":
        return {
            "grid": np.asarray(inst["grid"], dtype=np.int8),
            "start": tuple(inst["start"]),
            "goal": tuple(inst["goal"]),
            "path": [tuple(c) for c in inst["path"]],
        }
    if kind == "shidoku":
        return {"givens": np.asarray(inst["givens"], dtype=np.int8),
                "solution": np.asarray(inst["solution"], dtype=np.int8)}
    raise ConfigError(f"unknown task kind '{kind}'")
