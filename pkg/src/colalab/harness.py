"""Experiment orchestration: artifact training, the five-policy comparison
with paired seeds, regret and sublinearity reports, the Bayes-filter ablation,
the lookahead-horizon sweep, and the knowledge-transfer probe.

All randomness derives from the config, and result reductions are sorted, so
every output file is byte-identical across repeated runs (workers included).
"""
from __future__ import annotations

import dataclasses
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from colalab import baselines as bl
from colalab import io
from colalab.belief import SyntheticClassifier, labels_for_modes
from colalab.cola import LOG_COLUMNS, cola_episode
from colalab.config import ExperimentConfig, config_to_dict, experiment_hash
from colalab.env import LaneWorld, LaneWorldFamily, Mode, initial_controller_params
from colalab.meta import TrainerConfig, meta_train, rollout

POLICY_NAMES = ["cola", "base", "maml", "qmix", "oracle"]
_POLICY_CODE = {name: i + 1 for i, name in enumerate(POLICY_NAMES)}
_ENV_STREAM = 1000  # env seeds are shared across policies for paired episodes


# ------------------------------------------------------------- seed plumbing

def env_rng(seed: int, episode: int, salt: int = 0):
    return np.random.default_rng(np.random.SeedSequence([_ENV_STREAM, seed, episode, salt]))


def action_rng(seed: int, episode: int, salt: int = 0):
    """Shared across policies (common random numbers pair their action draws,
    and the delta=0 adaptive run reduces to the plain rollout exactly)."""
    return np.random.default_rng(np.random.SeedSequence([_ENV_STREAM + 1, seed, episode, salt]))


def policy_rngs(name: str, seed: int, episode: int, n: int = 2):
    code = _POLICY_CODE.get(name, abs(hash(name)) % 10_000 + 100)
    return [
        np.random.default_rng(np.random.SeedSequence([code, seed, episode, k]))
        for k in range(n)
    ]


# ---------------------------------------------------------- artifact training

def train_meta_artifacts(cfg: ExperimentConfig):
    """Meta-train across the two anchor modes; persist policy and banks."""
    from colalab.policy import LinearSoftmaxPolicy

    family = LaneWorldFamily(cfg.env)
    policy = LinearSoftmaxPolicy(cfg.env.n_features, cfg.env.n_actions)
    anchors = family.anchor_modes()
    report = meta_train(
        make_env=family.make,
        policy=policy,
        theta0=initial_controller_params(cfg.env),
        mode_sampler=lambda rng: anchors,
        cfg=cfg.trainer,
    )
    os.makedirs(cfg.meta_dir(), exist_ok=True)
    io.save_policy(cfg.policy_path(), policy, report.theta,
                   {"role": "meta", "iterations": len(report.iteration_rewards)})
    io.save_bank(cfg.bank_dir(), report.banks)
    io.write_csv(
        os.path.join(cfg.meta_dir(), "training_curve.csv"),
        ["iteration", "mean_reward"],
        [[i, float(r)] for i, r in enumerate(report.iteration_rewards)],
        header_comment=f"config_hash={experiment_hash(cfg)}",
    )
    return report


def train_classifier_artifact(cfg: ExperimentConfig):
    """Collect labeled observations from dynamic-schedule rollouts under the
    meta policy and fit the logistic likelihood model."""
    from colalab.belief import train_likelihood

    policy, theta, _ = io.load_policy(cfg.policy_path())
    family = LaneWorldFamily(cfg.env)
    z_c, z_r = family.anchor_modes()
    feats, labels = [], []
    root = np.random.SeedSequence(cfg.classifier.seed)
    for _ in range(cfg.classifier.episodes):
        e_rng, a_rng = (np.random.default_rng(s) for s in root.spawn(2))
        traj = rollout(family.make(None), policy, theta, e_rng, a_rng)
        feats.append(traj.observations)
        labels.append(labels_for_modes(traj.mode_trace, z_r, z_c))
    model = train_likelihood(
        (np.vstack(feats), np.concatenate(labels)),
        l2=cfg.classifier.l2,
        holdout_every=cfg.classifier.holdout_every,
    )
    io.save_likelihood(cfg.classifier_path(), model)
    return model


def train_baseline_artifacts(cfg: ExperimentConfig):
    """Train the dynamic-schedule base policy and the per-anchor Q tables."""
    from colalab.policy import LinearSoftmaxPolicy

    family = LaneWorldFamily(cfg.env)
    policy = LinearSoftmaxPolicy(cfg.env.n_features, cfg.env.n_actions)
    base_theta, curve = bl.train_base_policy(
        lambda: family.make(None), policy, initial_controller_params(cfg.env), cfg.base_trainer
    )
    os.makedirs(cfg.out_dir, exist_ok=True)
    io.save_policy(cfg.base_policy_path(), policy, base_theta,
                   {"role": "base", "iterations": len(curve)})

    disc = bl.LaneDiscretizer()
    anchors = family.anchor_modes()
    tables = []
    for i, mode in enumerate(anchors):
        qcfg = dataclasses.replace(cfg.qlearn, seed=cfg.qlearn.seed + i)
        tables.append(
            bl.train_q_table(
                make_env=lambda m=mode: family.make(m),
                discretize=disc.bucket,
                n_buckets=disc.n_buckets,
                n_actions=cfg.env.n_actions,
                cfg=qcfg,
            )
        )
    io.save_q_tables(cfg.qtables_path(), tables, anchors, disc)
    return base_theta, tables


@dataclass
class Artifacts:
    policy: object
    meta_theta: np.ndarray
    banks: object
    base_policy: object
    base_theta: np.ndarray
    classifier: object
    tables: list
    table_modes: list[Mode]
    discretizer: object
    hashes: dict


def load_artifacts(cfg: ExperimentConfig) -> Artifacts:
    required = [
        cfg.policy_path(),
        os.path.join(cfg.bank_dir(), "manifest.json"),
        cfg.base_policy_path(),
        cfg.classifier_path(),
        cfg.qtables_path(),
    ]
    missing = [p for p in required if not os.path.exists(p)]
    if missing:
        raise FileNotFoundError(f"missing artifacts: {missing}; run the training subcommands first")
    policy, meta_theta, _ = io.load_policy(cfg.policy_path())
    banks = io.load_bank(cfg.bank_dir())
    base_policy, base_theta, _ = io.load_policy(cfg.base_policy_path())
    classifier = io.load_likelihood(cfg.classifier_path())
    tables, table_modes, disc = io.load_q_tables(cfg.qtables_path())
    hashes = {
        "config_hash": experiment_hash(cfg),
        "policy": io.file_hash(cfg.policy_path()),
        "banks": io.file_hash(os.path.join(cfg.bank_dir(), "manifest.json")),
        "base": io.file_hash(cfg.base_policy_path()),
        "classifier": io.file_hash(cfg.classifier_path()),
        "qtables": io.file_hash(cfg.qtables_path()),
    }
    return Artifacts(policy, meta_theta, banks, base_policy, base_theta,
                     classifier, tables, table_modes, disc, hashes)


def header_comment(cfg: ExperimentConfig, hashes: dict) -> str:
    return " ".join(f"{k}={v}" for k, v in sorted(hashes.items()))


# ------------------------------------------------------------ episode running

def model_likelihood(model):
    return lambda obs, mode, rng: model.outputs(obs)


def synthetic_likelihood(classifier: SyntheticClassifier):
    return lambda obs, mode, rng: classifier.outputs(mode, rng)


def run_one_episode(name: str, art: Artifacts, cfg: ExperimentConfig, seed: int,
                    episode: int, env: LaneWorld | None = None):
    """One episode of the named policy; env seeds are shared across policies."""
    if env is None:
        env = LaneWorld(cfg.env)
    e_rng = env_rng(seed, episode)
    a_rng = action_rng(seed, episode)
    logs = None
    if name == "cola":
        ad_rng, b_rng = policy_rngs(name, seed, episode)
        traj, logs = cola_episode(
            art.policy, art.meta_theta, model_likelihood(art.classifier), art.banks,
            env, cfg.adapt, e_rng, a_rng, ad_rng, b_rng,
        )
    elif name == "base":
        traj = rollout(env, art.base_policy, art.base_theta, e_rng, a_rng)
    elif name == "maml":
        traj = bl.maml_episode(art.policy, art.meta_theta, env, cfg.maml_lookback,
                               cfg.maml_alpha, e_rng, a_rng)
    elif name == "qmix":
        (b_rng,) = policy_rngs(name, seed, episode, 1)
        traj = bl.qmix_episode(
            art.tables, art.discretizer.bucket, model_likelihood(art.classifier),
            env, cfg.adapt.likelihood_floor, e_rng, b_rng,
        )
    elif name == "oracle":
        (o_rng,) = policy_rngs(name, seed, episode, 1)
        traj = bl.oracle_episode(art.policy, art.meta_theta, env, cfg.adapt,
                                 e_rng, a_rng, o_rng)
    else:
        raise ValueError(f"unknown policy {name!r}")
    return traj, logs


def _episode_summary(name, seed, episode, traj):
    return [
        name, seed, episode, traj.total_reward, traj.t_term,
        float(traj.speeds.mean()), traj.n_out, traj.n_slow,
    ]


def pad_rewards(trajs, horizon: int) -> np.ndarray:
    out = np.zeros((len(trajs), horizon))
    for i, traj in enumerate(trajs):
        out[i, : traj.t_term] = traj.rewards
    return out


# ------------------------------------------------------------------- regret

@dataclass
class RegretSeries:
    values: np.ndarray  # cumulative, length T
    policy_id: str = ""
    n_episodes: int = 0
    seeds: tuple = ()


def regret(oracle_rewards, policy_rewards, policy_id: str = "", seeds=()) -> RegretSeries:
    """Cumulative oracle-minus-policy reward gap, averaged over paired episodes."""
    oracle_rewards = np.atleast_2d(np.asarray(oracle_rewards, dtype=float))
    policy_rewards = np.atleast_2d(np.asarray(policy_rewards, dtype=float))
    if oracle_rewards.shape != policy_rewards.shape:
        raise ValueError(
            f"shape mismatch {oracle_rewards.shape} vs {policy_rewards.shape}"
        )
    diff = (oracle_rewards - policy_rewards).mean(axis=0)
    return RegretSeries(np.cumsum(diff), policy_id, oracle_rewards.shape[0], tuple(seeds))


def sublinearity_stat(reg: RegretSeries) -> dict:
    """Average-regret comparison at T/2 and T plus the tail slope; the verdict
    is sublinear-consistent when the average regret decreases."""
    values = reg.values
    t_full = len(values)
    if t_full < 20:
        raise ValueError("need at least 20 steps for the sublinearity report")
    t_half = t_full // 2
    ratio_half = values[t_half - 1] / t_half
    ratio_full = values[-1] / t_full
    ts = np.arange(t_half, t_full)
    slope = float(np.polyfit(ts, values[t_half:], 1)[0])
    atol = 1e-12
    tol = 1e-9 * max(abs(ratio_half), abs(ratio_full)) + atol
    sublinear = bool(
        ratio_full < ratio_half - tol or (abs(ratio_full) <= atol and abs(ratio_half) <= atol)
    )
    return {
        "avg_regret_half": float(ratio_half),
        "avg_regret_full": float(ratio_full),
        "tail_slope": slope,
        "verdict": "sublinear-consistent" if sublinear else "not sublinear",
    }


# --------------------------------------------------------------- bootstrap

N_BOOT = 10_000


def bootstrap_mean_ci(values, alpha: float = 0.05, seed: int = 909) -> tuple[float, float]:
    values = np.asarray(values, dtype=float)
    rng = np.random.default_rng(np.random.SeedSequence([909090, seed]))
    idx = rng.integers(0, len(values), size=(N_BOOT, len(values)))
    means = values[idx].mean(axis=1)
    return float(np.quantile(means, alpha / 2)), float(np.quantile(means, 1 - alpha / 2))


def paired_bootstrap_greater(a, b, seed: int = 909) -> tuple[float, float]:
    """One-sided paired test that mean(a) > mean(b): returns (mean difference,
    5th percentile of the bootstrapped mean difference)."""
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    rng = np.random.default_rng(np.random.SeedSequence([909091, seed]))
    idx = rng.integers(0, len(d), size=(N_BOOT, len(d)))
    means = d[idx].mean(axis=1)
    return float(d.mean()), float(np.quantile(means, 0.05))


# ------------------------------------------------------------------ workers

_WORKER_CTX: dict = {}


def _worker_init(cfg_doc):
    from colalab.config import config_from_dict

    cfg = config_from_dict(cfg_doc)
    _WORKER_CTX["cfg"] = cfg
    _WORKER_CTX["artifacts"] = load_artifacts(cfg)


def _worker_run(task):
    name, seed, episodes = task
    cfg = _WORKER_CTX["cfg"]
    art = _WORKER_CTX["artifacts"]
    out = []
    for episode in episodes:
        traj, logs = run_one_episode(name, art, cfg, seed, episode)
        out.append((name, seed, episode, traj, logs))
    return out


def _run_tasks(cfg: ExperimentConfig, art: Artifacts, tasks):
    """Run (policy, seed, episodes) tasks, fanning out when workers > 1; the
    result order is re-sorted so parallelism cannot perturb output bytes."""
    results = []
    if cfg.workers > 1:
        with ProcessPoolExecutor(
            max_workers=cfg.workers, initializer=_worker_init,
            initargs=(config_to_dict(cfg),),
        ) as pool:
            for chunk in pool.map(_worker_run, tasks):
                results.extend(chunk)
    else:
        for task in tasks:
            name, seed, episodes = task
            for episode in episodes:
                traj, logs = run_one_episode(name, art, cfg, seed, episode)
                results.append((name, seed, episode, traj, logs))
    results.sort(key=lambda r: (r[0], r[1], r[2]))
    return results


# ----------------------------------------------------------- main experiments

def run_comparison(cfg: ExperimentConfig, policies=None) -> dict:
    """Evaluate the adaptive policy and the four baselines on shared seeds;
    write per-episode results, regret series, adaptation step logs, and the
    bootstrap summary."""
    art = load_artifacts(cfg)
    policies = policies or POLICY_NAMES
    os.makedirs(cfg.out_dir, exist_ok=True)
    episodes = list(range(cfg.episodes_per_seed))
    tasks = [(name, seed, episodes) for name in policies for seed in cfg.seeds]
    results = _run_tasks(cfg, art, tasks)

    by_policy: dict[str, list] = {name: [] for name in policies}
    for name, seed, episode, traj, logs in results:
        by_policy[name].append((seed, episode, traj, logs))

    comment = header_comment(cfg, art.hashes)
    rows = [_episode_summary(n, s, e, t) for n, s, e, t, _ in results]
    io.write_csv(
        os.path.join(cfg.out_dir, "results.csv"),
        ["policy", "seed", "episode", "total_reward", "t_term", "mean_speed", "n_out", "n_slow"],
        rows, comment,
    )

    if "cola" in by_policy:
        step_rows = []
        for seed, episode, _traj, logs in by_policy["cola"]:
            for row in logs.rows:
                step_rows.append([seed, episode] + row)
        io.write_csv(
            os.path.join(cfg.out_dir, "cola_steps.csv"),
            ["seed", "episode"] + LOG_COLUMNS, step_rows, comment,
        )

    horizon = cfg.env.horizon
    reward_mats = {
        name: pad_rewards([t for _, _, t, _ in entries], horizon)
        for name, entries in by_policy.items()
    }
    regrets = {}
    regret_rows = []
    if "oracle" in reward_mats:
        for name in policies:
            if name == "oracle":
                continue
            series = regret(reward_mats["oracle"], reward_mats[name], name, cfg.seeds)
            regrets[name] = series
            for t, v in enumerate(series.values):
                regret_rows.append([name, t + 1, float(v)])
        io.write_csv(os.path.join(cfg.out_dir, "regret.csv"),
                     ["policy", "t", "regret"], regret_rows, comment)

    summary_rows = []
    summary = {}
    for name in policies:
        totals = np.array([t.total_reward for _, _, t, _ in by_policy[name]])
        lo, hi = bootstrap_mean_ci(totals, seed=cfg.seeds[0])
        entry = {
            "episodes": len(totals),
            "mean_reward": float(totals.mean()),
            "std_reward": float(totals.std(ddof=1)) if len(totals) > 1 else 0.0,
            "ci_lo": lo,
            "ci_hi": hi,
        }
        if name in regrets:
            stats = sublinearity_stat(regrets[name])
            entry.update(
                regret_final=float(regrets[name].values[-1]),
                avg_regret_half=stats["avg_regret_half"],
                avg_regret_full=stats["avg_regret_full"],
                verdict=stats["verdict"],
            )
        else:
            entry.update(regret_final=0.0, avg_regret_half=0.0,
                         avg_regret_full=0.0, verdict="")
        summary[name] = entry
        summary_rows.append([
            name, entry["episodes"], entry["mean_reward"], entry["std_reward"],
            entry["ci_lo"], entry["ci_hi"], entry["regret_final"],
            entry["avg_regret_half"], entry["avg_regret_full"], entry["verdict"],
        ])
    io.write_csv(
        os.path.join(cfg.out_dir, "summary.csv"),
        ["policy", "episodes", "mean_reward", "std_reward", "ci_lo", "ci_hi",
         "regret_final", "avg_regret_half", "avg_regret_full", "verdict"],
        summary_rows, comment,
    )

    if "cola" in by_policy and "qmix" in by_policy:
        cola_r = np.array([t.total_reward for _, _, t, _ in by_policy["cola"]])
        qmix_r = np.array([t.total_reward for _, _, t, _ in by_policy["qmix"]])
        diff, lo5 = paired_bootstrap_greater(cola_r, qmix_r, seed=cfg.seeds[0])
        summary["cola_vs_qmix"] = {"mean_diff": diff, "diff_p5": lo5}
    return summary


def run_cola_only(cfg: ExperimentConfig) -> dict:
    """Run just the adaptive policy, writing results and step logs."""
    return run_comparison(cfg, policies=["cola"])


def ablate_filter(cfg: ExperimentConfig) -> dict:
    """Paired filter-vs-vanilla belief runs on identical seeds and classifier
    error draws. Off-road termination is disabled so every episode carries a
    full-horizon label record, and the weather holds one schedule interval per
    episode (the initial value still varies across episodes): the printed
    memoryless filter integrates evidence but cannot forget, so per-episode
    persistence is the regime the transient-accuracy comparison describes."""
    art = load_artifacts(cfg)
    env_cfg = dataclasses.replace(cfg.env, offroad_terminates=False,
                                  delta_t=cfg.env.horizon)
    z_c, z_r = cfg.env.anchor_modes()
    abl = cfg.ablation
    if abl.source == "synthetic":
        likelihood_fn = synthetic_likelihood(SyntheticClassifier(
            z_r=z_r, z_c=z_c, accuracy=abl.accuracy, gain=abl.gain,
            confidence_cap=abl.confidence_cap,
        ))
    else:
        likelihood_fn = model_likelihood(art.classifier)

    horizon = env_cfg.horizon
    acc = {"filter": np.zeros((abl.episodes, horizon), dtype=bool),
           "vanilla": np.zeros((abl.episodes, horizon), dtype=bool)}
    rewards = {"filter": [], "vanilla": []}
    for episode in range(abl.episodes):
        for variant in ("filter", "vanilla"):
            env = LaneWorld(env_cfg)
            e_rng = env_rng(abl.seed, episode, salt=1)
            a_rng = action_rng(abl.seed, episode, salt=1)
            (ad_rng,) = policy_rngs(variant, abl.seed, episode, 1)
            b_rng = np.random.default_rng(np.random.SeedSequence([4242, abl.seed, episode]))
            traj, logs = cola_episode(
                art.policy, art.meta_theta, likelihood_fn, art.banks, env,
                cfg.adapt, e_rng, a_rng, ad_rng, b_rng, belief_mode=variant,
            )
            truth = labels_for_modes(traj.mode_trace, z_r, z_c)
            predicted = (logs.column("belief_rainy") > logs.column("belief_cloudy")).astype(int)
            acc[variant][episode] = predicted == truth
            rewards[variant].append(traj.total_reward)

    transient = {v: acc[v].mean(axis=0) for v in acc}
    episodic = {v: float(acc[v].mean()) for v in acc}
    mean_rewards = {v: float(np.mean(rewards[v])) for v in rewards}

    os.makedirs(cfg.out_dir, exist_ok=True)
    rows = [[t, float(transient["filter"][t]), float(transient["vanilla"][t]), "", ""]
            for t in range(horizon)]
    rows.append(["episodic", episodic["filter"], episodic["vanilla"],
                 mean_rewards["filter"], mean_rewards["vanilla"]])
    io.write_csv(
        os.path.join(cfg.out_dir, "ablation.csv"),
        ["t", "transient_acc_filter", "transient_acc_vanilla",
         "mean_reward_filter", "mean_reward_vanilla"],
        rows, header_comment(cfg, art.hashes),
    )
    return {
        "transient_filter": transient["filter"],
        "transient_vanilla": transient["vanilla"],
        "episodic_filter": episodic["filter"],
        "episodic_vanilla": episodic["vanilla"],
        "mean_reward_filter": mean_rewards["filter"],
        "mean_reward_vanilla": mean_rewards["vanilla"],
    }


def sweep_lookahead(cfg: ExperimentConfig, ks=None) -> list[dict]:
    """Episodic reward mean and spread per lookahead horizon under the fixed
    cloudy, fixed rainy, and dynamic schedules."""
    art = load_artifacts(cfg)
    ks = list(cfg.sweep_ks if ks is None else ks)
    if not ks:
        raise ValueError("empty lookahead list")
    for k in ks:
        if k > cfg.env.horizon:
            raise ValueError(f"lookahead {k} exceeds horizon {cfg.env.horizon}")
    z_c, z_r = cfg.env.anchor_modes()
    conditions = [("cloudy", z_c), ("rainy", z_r), ("dynamic", None)]
    out = []
    rows = []
    for k in ks:
        adapt = dataclasses.replace(cfg.adapt, lookahead=k)
        for cond_name, mode in conditions:
            totals = []
            for seed in cfg.seeds:
                for episode in range(cfg.sweep_episodes_per_seed):
                    env = LaneWorld(cfg.env, mode)
                    e_rng = env_rng(seed, episode, salt=2)
                    a_rng = action_rng(seed, episode, salt=2)
                    ad_rng, b_rng = policy_rngs(f"sweep{k}", seed, episode)
                    traj, _ = cola_episode(
                        art.policy, art.meta_theta, model_likelihood(art.classifier),
                        art.banks, env, adapt, e_rng, a_rng, ad_rng, b_rng,
                    )
                    totals.append(traj.total_reward)
            totals = np.array(totals)
            entry = {
                "K": k, "condition": cond_name, "episodes": len(totals),
                "mean_reward": float(totals.mean()),
                "std_reward": float(totals.std(ddof=1)),
            }
            out.append(entry)
            rows.append([k, cond_name, len(totals), entry["mean_reward"], entry["std_reward"]])
    os.makedirs(cfg.out_dir, exist_ok=True)
    io.write_csv(
        os.path.join(cfg.out_dir, "sweep_k.csv"),
        ["K", "condition", "episodes", "mean_reward", "std_reward"],
        rows, header_comment(cfg, art.hashes),
    )
    return out


def knowledge_transfer_probe(cfg: ExperimentConfig, episodes_per_mode: int | None = None) -> dict:
    """Adapt with the pure cloudy-bank gradient versus the pure rainy-bank
    gradient in both fixed modes; reports mean per-step speeds. The probe
    spends its own, larger per-step budget to expose the direction."""
    art = load_artifacts(cfg)
    z_c, z_r = cfg.env.anchor_modes()
    episodes_per_mode = episodes_per_mode or cfg.probe_episodes
    probe_adapt = dataclasses.replace(
        cfg.adapt,
        segments=cfg.probe_segments,
        trust=dataclasses.replace(cfg.adapt.trust, delta=cfg.probe_delta),
    )
    beliefs = {"g_cloudy": np.array([1.0, 0.0]), "g_rainy": np.array([0.0, 1.0])}
    speeds: dict[tuple[str, str], list[float]] = {}
    for env_name, mode in [("cloudy", z_c), ("rainy", z_r)]:
        for g_name, forced in beliefs.items():
            vals = []
            for episode in range(episodes_per_mode):
                env = LaneWorld(cfg.env, mode)
                e_rng = env_rng(7000 + episode, episode, salt=3)
                a_rng = action_rng(7000 + episode, episode, salt=3)
                ad_rng, b_rng = policy_rngs(g_name + env_name, 0, episode)
                traj, _ = cola_episode(
                    art.policy, art.meta_theta, model_likelihood(art.classifier),
                    art.banks, env, probe_adapt, e_rng, a_rng, ad_rng, b_rng,
                    forced_belief=forced,
                )
                vals.append(float(traj.speeds.mean()))
            speeds[(env_name, g_name)] = vals
    rows = []
    result = {}
    for (env_name, g_name), vals in sorted(speeds.items()):
        mean = float(np.mean(vals))
        result[f"{env_name}/{g_name}"] = mean
        rows.append([env_name, g_name, len(vals), mean, float(np.std(vals, ddof=1))])
    os.makedirs(cfg.out_dir, exist_ok=True)
    io.write_csv(
        os.path.join(cfg.out_dir, "transfer_speeds.csv"),
        ["env_mode", "gradient", "episodes", "mean_speed", "std_speed"],
        rows, header_comment(cfg, art.hashes),
    )
    return result
