"""Artifact serialization: policy files, trajectory records, banks, Q tables,
classifier models, and deterministic CSV output. Floats are written with repr
so files round-trip bit-exactly and repeated runs are byte-identical."""
from __future__ import annotations

import hashlib
import json
import os

import numpy as np

from colalab.baselines import LaneDiscretizer, QTable
from colalab.belief import LikelihoodModel
from colalab.env import Mode, Trajectory
from colalab.meta import TrajectoryBank
from colalab.policy import make_policy

TRAJECTORY_FORMAT = "colalab-trajectory v1"
POLICY_FORMAT = "colalab-policy"
BANK_FORMAT = "colalab-bank"
QTABLE_FORMAT = "colalab-qtables"
CLASSIFIER_FORMAT = "colalab-classifier"


def _fmt(x) -> str:
    return repr(float(x))


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()[:16]


def file_hash(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()[:16]


# ---------------------------------------------------------------- policies

def save_policy(path, policy, theta, extra_meta: dict | None = None):
    doc = {
        "format": POLICY_FORMAT,
        "version": 1,
        "meta": {**policy.metadata(), **(extra_meta or {})},
        "theta": [float(x) for x in np.asarray(theta).ravel()],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_policy(path):
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != POLICY_FORMAT:
        raise ValueError(f"{path} is not a policy file")
    policy = make_policy(doc["meta"])
    return policy, np.array(doc["theta"], dtype=float), doc["meta"]


# ------------------------------------------------------------ trajectories

def write_trajectory(fh, traj: Trajectory):
    """One step per line: t, observation features, action, reward, speed, mode."""
    n_features = traj.observations.shape[1]
    fields = ["t"] + [f"obs{i}" for i in range(n_features)] + [
        "action", "reward", "speed", "cloudiness", "rain", "puddles",
    ]
    fh.write(f"{TRAJECTORY_FORMAT} fields={','.join(fields)}\n")
    fh.write(
        f"meta t_term={traj.t_term} n_out={traj.n_out} n_slow={traj.n_slow} "
        f"horizon={traj.horizon}\n"
    )
    for t in range(traj.t_term):
        row = (
            [str(t)]
            + [_fmt(v) for v in traj.observations[t]]
            + [str(int(traj.actions[t])), _fmt(traj.rewards[t]), _fmt(traj.speeds[t])]
            + [_fmt(v) for v in traj.mode_trace[t]]
        )
        fh.write(" ".join(row) + "\n")


def read_trajectory(fh) -> Trajectory:
    header = fh.readline().strip()
    if not header.startswith(TRAJECTORY_FORMAT):
        raise ValueError("missing trajectory version header")
    meta = dict(kv.split("=") for kv in fh.readline().split()[1:])
    t_term = int(meta["t_term"])
    n_fields = len(header.split("fields=")[1].split(","))
    n_features = n_fields - 7
    observations = np.empty((t_term, n_features))
    actions = np.empty(t_term, dtype=np.intp)
    rewards = np.empty(t_term)
    speeds = np.empty(t_term)
    mode_trace = np.empty((t_term, 3))
    for i in range(t_term):
        parts = fh.readline().split()
        observations[i] = [float(x) for x in parts[1 : 1 + n_features]]
        actions[i] = int(parts[1 + n_features])
        rewards[i] = float(parts[2 + n_features])
        speeds[i] = float(parts[3 + n_features])
        mode_trace[i] = [float(x) for x in parts[4 + n_features : 7 + n_features]]
    return Trajectory(
        observations=observations,
        actions=actions,
        rewards=rewards,
        speeds=speeds,
        mode_trace=mode_trace,
        t_term=t_term,
        n_out=int(meta["n_out"]),
        n_slow=int(meta["n_slow"]),
        horizon=int(meta["horizon"]),
    )


# ------------------------------------------------------------------- banks

def mode_to_list(mode: Mode):
    return [mode.cloudiness, mode.rain, mode.puddles]


def mode_from_list(values) -> Mode:
    return Mode(*[float(v) for v in values])


def save_bank(directory, bank: TrajectoryBank):
    os.makedirs(directory, exist_ok=True)
    manifest = {
        "format": BANK_FORMAT,
        "version": 1,
        "policy_hash": bank.policy_hash,
        "horizon": bank.horizon,
        "modes": [],
    }
    for i, (mode, trajs) in enumerate(bank.trajectories.items()):
        fname = f"bank_mode{i}.txt"
        with open(os.path.join(directory, fname), "w") as fh:
            for traj in trajs:
                write_trajectory(fh, traj)
        manifest["modes"].append({"mode": mode_to_list(mode), "file": fname, "count": len(trajs)})
    with open(os.path.join(directory, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=1)


def load_bank(directory) -> TrajectoryBank:
    with open(os.path.join(directory, "manifest.json")) as fh:
        manifest = json.load(fh)
    if manifest.get("format") != BANK_FORMAT:
        raise ValueError(f"{directory} is not a bank directory")
    trajectories = {}
    for entry in manifest["modes"]:
        mode = mode_from_list(entry["mode"])
        with open(os.path.join(directory, entry["file"])) as fh:
            trajectories[mode] = [read_trajectory(fh) for _ in range(entry["count"])]
    return TrajectoryBank(trajectories, manifest["policy_hash"], manifest["horizon"])


# ---------------------------------------------------------------- Q tables

def save_q_tables(path, tables: list[QTable], modes: list[Mode], discretizer: LaneDiscretizer):
    doc = {
        "format": QTABLE_FORMAT,
        "version": 1,
        "discretizer": discretizer.metadata(),
        "modes": [mode_to_list(m) for m in modes],
        "tables": [
            {"values": t.values.tolist(), "visited": t.visited.astype(int).tolist()}
            for t in tables
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_q_tables(path):
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != QTABLE_FORMAT:
        raise ValueError(f"{path} is not a Q-table file")
    disc = LaneDiscretizer(
        offset_edges=np.array(doc["discretizer"]["offset_edges"]),
        heading_edges=np.array(doc["discretizer"]["heading_edges"]),
        speed_edges=np.array(doc["discretizer"]["speed_edges"]),
        visibility_edges=np.array(doc["discretizer"]["visibility_edges"]),
    )
    tables = [
        QTable(values=np.array(t["values"]), visited=np.array(t["visited"], dtype=bool))
        for t in doc["tables"]
    ]
    modes = [mode_from_list(m) for m in doc["modes"]]
    return tables, modes, disc


# -------------------------------------------------------------- classifier

def save_likelihood(path, model: LikelihoodModel):
    doc = {
        "format": CLASSIFIER_FORMAT,
        "version": 1,
        "weights": [float(w) for w in model.weights],
        "holdout_accuracy": float(model.holdout_accuracy),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_likelihood(path) -> LikelihoodModel:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != CLASSIFIER_FORMAT:
        raise ValueError(f"{path} is not a classifier file")
    return LikelihoodModel(
        weights=np.array(doc["weights"]), holdout_accuracy=doc["holdout_accuracy"]
    )


# --------------------------------------------------------------------- CSV

def write_csv(path, columns: list[str], rows, header_comment: str = ""):
    """Deterministic CSV: optional single comment line, then header and rows.
    Floats are rendered with repr; everything else with str."""
    with open(path, "w", newline="\n") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            cells = [_fmt(v) if isinstance(v, float) else str(v) for v in row]
            fh.write(",".join(cells) + "\n")


def read_csv(path):
    """Returns (comment, columns, rows-as-strings)."""
    with open(path) as fh:
        first = fh.readline().rstrip("\n")
        comment = ""
        if first.startswith("#"):
            comment = first[1:].strip()
            first = fh.readline().rstrip("\n")
        columns = first.split(",")
        rows = [line.rstrip("\n").split(",") for line in fh if line.strip()]
    return comment, columns, rows
