"""Pipeline orchestration: configuration, staged execution, persistence.

Every stage is a pure function of (config, input files) writing versioned
text artifacts into the output directory, so the monolithic `run_pipeline`
and the per-stage CLI subcommands produce byte-identical outputs. All
randomness flows from explicit seeds in the config.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields

import numpy as np

import ctfcad
from ctfcad import crge, data, froc as froc_mod, mil, mrmr, plots, spg, templates, voting
from ctfcad.errors import ConfigError, DataError


@dataclass
class PipelineConfig:
    # data
    train_path: str | None = None
    test_path: str | None = None
    synth: dict | None = None  # SynthSpec fields; generates data when set
    train_fraction: float = 0.5
    seed: int = 0
    # coarse stage
    prior_sigma2: float = 10.0
    target_recall: float = 1.0
    rho: float | None = None  # manual override of the recall-target policy
    enable_prune: bool = True
    # feature selection
    enable_select: bool = True
    max_m: int | None = None  # None: feature count
    # embedding
    embedding_backend: str = "crge"
    affinity: str = "cosine"
    affinity_alpha: float = 1.0
    crge_mode: str = "orthonormal"
    n_tilde: int | None = None  # None: choose from dim_range
    dim_range: list = field(default_factory=lambda: [2, 3, 4, 5])
    spg_graph_k: int = 5
    spg_beta: float | None = None
    spg_k_sparsity: int | None = None
    # clustering / voting
    c_range: list | None = None
    restarts: int = 5
    cluster_max_iters: int = 100
    k: int | None = None  # None: choose by partial AUC
    count_votes: bool = False
    # evaluation
    fp_range: list = field(default_factory=lambda: [2.0, 4.0])

    def __post_init__(self):
        if self.embedding_backend not in ("crge", "spg"):
            raise ConfigError(f"unknown embedding backend {self.embedding_backend!r}")
        if self.affinity not in ("binary", "heat", "mahalanobis", "cosine"):
            raise ConfigError(f"unknown affinity {self.affinity!r}")
        if self.crge_mode not in ("frobenius", "orthonormal"):
            raise ConfigError(f"unknown crge mode {self.crge_mode!r}")
        if len(self.fp_range) != 2 or not self.fp_range[0] < self.fp_range[1]:
            raise ConfigError("fp_range must be [lo, hi] with lo < hi")
        if self.synth is None and (self.train_path is None or self.test_path is None):
            raise ConfigError("either synth or both train_path and test_path required")


_SYNTH_KEYS = {f.name for f in fields(data.SynthSpec)}


def load_config(path, seed_override=None) -> PipelineConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return config_from_dict(raw, seed_override)


def config_from_dict(raw: dict, seed_override=None) -> PipelineConfig:
    known = {f.name for f in fields(PipelineConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if raw.get("synth") is not None:
        bad = set(raw["synth"]) - _SYNTH_KEYS
        if bad:
            raise ConfigError(f"unknown synth keys: {sorted(bad)}")
    try:
        cfg = PipelineConfig(**raw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    if seed_override is not None:
        cfg.seed = int(seed_override)
    return cfg


# ---------------------------------------------------------------------------
# artifact paths

def _p(out, name):
    return os.path.join(out, name)


def _require(out, name, producer):
    path = _p(out, name)
    if not os.path.exists(path):
        raise DataError(f"missing artifact {name}; run the `{producer}` stage first")
    return path


def _synth_spec(cfg: PipelineConfig) -> data.SynthSpec:
    kw = dict(cfg.synth or {})
    kw.setdefault("seed", cfg.seed)
    if "candidates_per_case" in kw:
        kw["candidates_per_case"] = tuple(kw["candidates_per_case"])
    return data.SynthSpec(**kw)


def _load_train(cfg, out) -> data.Dataset:
    if cfg.synth is not None:
        return data.load(_require(out, "train.csv", "synth"))
    return data.load(cfg.train_path)


def _load_test(cfg, out) -> data.Dataset:
    if cfg.synth is not None:
        return data.load(_require(out, "test.csv", "synth"))
    return data.load(cfg.test_path)


# ---------------------------------------------------------------------------
# stages

def stage_synth(cfg: PipelineConfig, out: str) -> None:
    """Generate synthetic data and split it at case level."""
    if cfg.synth is None:
        return
    ds = data.synth_generate(_synth_spec(cfg))
    train, test = data.split_by_case(ds, cfg.train_fraction, cfg.seed)
    data.save(train, _p(out, "train.csv"))
    data.save(test, _p(out, "test.csv"))


def stage_train_coarse(cfg: PipelineConfig, out: str) -> None:
    """Standardize the training data and fit the coarse MIL model."""
    train = _load_train(cfg, out)
    train_std, scaler = data.standardize(train)
    data.save_scaler(scaler, _p(out, "scaler.txt"))
    model, _ = mil.train_map(train_std, cfg.prior_sigma2)
    mil.save_model(model, _p(out, "model.txt"))
    if cfg.rho is not None:
        rho = mil.PruneConfig(rho=float(cfg.rho))
    else:
        rho = mil.choose_threshold(train_std, model, cfg.target_recall)
    with open(_p(out, "rho.txt"), "w") as fh:
        fh.write("prune v1\n")
        fh.write(f"rho {rho.rho!r}\n")


def _load_rho(out) -> float:
    with open(_require(out, "rho.txt", "train-coarse")) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != "prune v1":
        raise DataError("rho.txt: not a prune v1 file")
    return float(lines[1].split()[1])


def stage_prune(cfg: PipelineConfig, out: str) -> None:
    """Write the retained (classification-critical) training subset."""
    train = _load_train(cfg, out)
    if not cfg.enable_prune:
        data.save(train, _p(out, "pruned.csv"))
        return
    scaler = data.load_scaler(_require(out, "scaler.txt", "train-coarse"))
    model = mil.load_model(_require(out, "model.txt", "train-coarse"))
    rho = mil.PruneConfig(rho=_load_rho(out))
    pruned = mil.prune(data.apply_scaler(scaler, train), model, rho)
    # persist in raw feature space; downstream stages re-apply the scaler
    keep = np.isin(train.candidate_id, pruned.candidate_id)
    retained = train.subset(keep)
    if not (np.any(retained.label == 0) and np.any(retained.label == 1)):
        raise DataError("pruning removed an entire class; lower target_recall or rho")
    data.save(retained, _p(out, "pruned.csv"))


def stage_select(cfg: PipelineConfig, out: str) -> None:
    pruned = data.load(_require(out, "pruned.csv", "prune"))
    scaler = data.load_scaler(_require(out, "scaler.txt", "train-coarse"))
    pruned_std = data.apply_scaler(scaler, pruned)
    if not cfg.enable_select:
        res = mrmr.SelectionResult(
            selected=list(range(pruned.n)),
            kappa_trajectory=[0.0] * pruned.n,
            stopped_early=False,
        )
    else:
        max_m = cfg.max_m if cfg.max_m is not None else pruned.n
        res = mrmr.select(pruned_std, max_m)
    mrmr.save_selection(res, pruned.feature_names, _p(out, "selection.txt"))
    plots.plot_selection(res.kappa_trajectory, _p(out, "selection.png"))


def _affinity_scheme(cfg: PipelineConfig) -> crge.AffinityScheme:
    if cfg.affinity in ("heat", "mahalanobis"):
        A = None
        if cfg.affinity == "mahalanobis":
            raise ConfigError("mahalanobis affinity requires a matrix; use the library API")
        return crge.AffinityScheme(kind=cfg.affinity, alpha=cfg.affinity_alpha, A=A)
    return crge.AffinityScheme(kind=cfg.affinity)


def stage_embed(cfg: PipelineConfig, out: str) -> None:
    pruned = data.load(_require(out, "pruned.csv", "prune"))
    scaler = data.load_scaler(_require(out, "scaler.txt", "train-coarse"))
    sel = mrmr.load_selection(_require(out, "selection.txt", "select"))
    ds = data.apply_scaler(scaler, pruned).select_features(sel.selected)
    if cfg.embedding_backend == "spg":
        n_tilde = cfg.n_tilde if cfg.n_tilde is not None else min(cfg.dim_range)
        model = spg.fit_spg(
            ds.X,
            min(n_tilde, ds.n),
            spg.SpgParams(
                graph_k=cfg.spg_graph_k, beta=cfg.spg_beta, k_sparsity=cfg.spg_k_sparsity
            ),
        )
        spg.save_spg(model, _p(out, "projection.txt"))
        return
    scheme = _affinity_scheme(cfg)
    opts = crge.FitOptions(mode=cfg.crge_mode, seed=cfg.seed)
    if cfg.n_tilde is not None:
        n_tilde = min(cfg.n_tilde, ds.n)
    else:
        dims = [d for d in cfg.dim_range if d <= ds.n] or [min(ds.n, 2)]
        n_tilde = crge.choose_dim(ds.X, ds.label, dims, scheme=scheme, opts=opts)
    proj, _ = crge.fit(ds.X, ds.label, n_tilde, scheme=scheme, opts=opts)
    crge.save_projection(proj, _p(out, "projection.txt"))


def _embedded_train(cfg, out):
    pruned = data.load(_require(out, "pruned.csv", "prune"))
    scaler = data.load_scaler(_require(out, "scaler.txt", "train-coarse"))
    sel = mrmr.load_selection(_require(out, "selection.txt", "select"))
    proj = crge.load_projection(_require(out, "projection.txt", "embed"))
    ds = data.apply_scaler(scaler, pruned).select_features(sel.selected)
    return ds, ds.X @ proj.M


def stage_cluster(cfg: PipelineConfig, out: str) -> None:
    """Build per-class templates and fix the voting neighborhood size."""
    ds, Y = _embedded_train(cfg, out)
    opts = templates.ClusterOptions(
        c_range=tuple(cfg.c_range) if cfg.c_range else None,
        max_iters=cfg.cluster_max_iters,
        seed=cfg.seed,
        restarts=cfg.restarts,
    )
    ts = templates.build_templates(Y, ds.label, opts)
    templates.save_templates(ts, _p(out, "templates.txt"))
    if cfg.k is not None:
        k = min(int(cfg.k), len(ts))
    else:
        k = voting.choose_k(
            ts, Y, ds.label, ds.case_id, ds.bag_id, tuple(cfg.fp_range),
            voting.VoteConfig(count_votes=cfg.count_votes),
        )
    with open(_p(out, "vote.txt"), "w") as fh:
        fh.write("vote v1\n")
        fh.write(f"k {k}\n")
        fh.write(f"count_votes {int(cfg.count_votes)}\n")


def _load_vote(out) -> voting.VoteConfig:
    with open(_require(out, "vote.txt", "cluster")) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != "vote v1":
        raise DataError("vote.txt: not a vote v1 file")
    return voting.VoteConfig(
        k=int(lines[1].split()[1]), count_votes=bool(int(lines[2].split()[1]))
    )


def cascade_scores(coarse: np.ndarray, fine: np.ndarray, retained: np.ndarray, rho: float):
    """Combine the two stages into one monotone score.

    Retained samples map to [rho, 1] by their fine score; pruned samples keep
    their coarse score scaled into [0, rho), preserving ranks within each
    group and keeping the full FROC defined below the operating point.
    """
    out = np.empty_like(coarse)
    out[retained] = rho + (1.0 - rho) * fine[retained]
    out[~retained] = rho * coarse[~retained]
    return out


def stage_score(cfg: PipelineConfig, out: str) -> None:
    """Score the test set through the full cascade."""
    test = _load_test(cfg, out)
    scaler = data.load_scaler(_require(out, "scaler.txt", "train-coarse"))
    model = mil.load_model(_require(out, "model.txt", "train-coarse"))
    rho = _load_rho(out) if cfg.enable_prune else 0.0
    sel = mrmr.load_selection(_require(out, "selection.txt", "select"))
    proj = crge.load_projection(_require(out, "projection.txt", "embed"))
    ts = templates.load_templates(_require(out, "templates.txt", "cluster"))
    vote = _load_vote(out)

    test_std = data.apply_scaler(scaler, test)
    coarse = mil.instance_prob(model, test_std.X)
    retained = coarse >= rho
    fine = np.zeros(len(test))
    if np.any(retained):
        Y = test_std.select_features(sel.selected).X[retained] @ proj.M
        fine[retained] = voting.posterior_batch(ts, Y, vote)
    combined = cascade_scores(coarse, fine, retained, rho)
    with open(_p(out, "scores.csv"), "w", newline="") as fh:
        fh.write("candidate_id,case_id,label,coarse_score,fine_score\n")
        for i in range(len(test)):
            fh.write(
                f"{int(test.candidate_id[i])},{test.case_id[i]},{int(test.label[i])},"
                f"{float(coarse[i])!r},{float(combined[i])!r}\n"
            )


def _load_scores(out):
    path = _require(out, "scores.csv", "score")
    cand, case, lab, coarse, fine = [], [], [], [], []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "candidate_id,case_id,label,coarse_score,fine_score":
            raise DataError("scores.csv: unexpected header")
        for line in fh:
            parts = line.strip().split(",")
            cand.append(int(parts[0]))
            case.append(parts[1])
            lab.append(int(parts[2]))
            coarse.append(float(parts[3]))
            fine.append(float(parts[4]))
    return np.array(cand), np.array(case, dtype=object), np.array(lab), np.array(coarse), np.array(fine)


def stage_evaluate(cfg: PipelineConfig, out: str) -> None:
    """Emit coarse-only and cascade FROC curves, partial AUCs, and a figure."""
    test = _load_test(cfg, out)
    cand, case, lab, coarse, fine = _load_scores(out)
    # map bag ids back from the test set by candidate id
    bag_by_cand = {int(c): str(b) for c, b in zip(test.candidate_id, test.bag_id)}
    bags = np.array([bag_by_cand[int(c)] for c in cand], dtype=object)
    curve_coarse = froc_mod.froc(coarse, lab, case, bags)
    curve_ctf = froc_mod.froc(fine, lab, case, bags)
    froc_mod.save_curve(curve_coarse, _p(out, "curve_coarse.csv"))
    froc_mod.save_curve(curve_ctf, _p(out, "curve_ctf.csv"))
    fp_range = tuple(cfg.fp_range)
    pauc_coarse = froc_mod.partial_auc(curve_coarse, fp_range)
    pauc_ctf = froc_mod.partial_auc(curve_ctf, fp_range)
    with open(_p(out, "report.txt"), "w") as fh:
        fh.write(f"fp_range {fp_range[0]!r} {fp_range[1]!r}\n")
        fh.write(f"coarse_partial_auc {pauc_coarse!r}\n")
        fh.write(f"ctf_partial_auc {pauc_ctf!r}\n")
    plots.plot_froc(
        {"coarse": curve_coarse, "coarse-to-fine": curve_ctf},
        _p(out, "froc.png"),
        fp_range=fp_range,
    )


def stage_retrieve(cfg: PipelineConfig, out: str, query_path: str, gallery_path: str,
                   max_k: int = 10) -> None:
    """Counterpart retrieval in the embedded space; truth pairs by bag_id."""
    scaler = data.load_scaler(_require(out, "scaler.txt", "train-coarse"))
    sel = mrmr.load_selection(_require(out, "selection.txt", "select"))
    proj = crge.load_projection(_require(out, "projection.txt", "embed"))
    query = data.apply_scaler(scaler, data.load(query_path)).select_features(sel.selected)
    gallery = data.apply_scaler(scaler, data.load(gallery_path)).select_features(sel.selected)
    truth = _truth_by_bag(query, gallery)
    Yq = query.X @ proj.M
    Yg = gallery.X @ proj.M
    ks = list(range(1, min(max_k, len(gallery)) + 1))
    rates = [(k, voting.retrieve(Yq, Yg, truth, k)) for k in ks]
    with open(_p(out, "retrieval.csv"), "w", newline="") as fh:
        fh.write("k,hit_rate\n")
        for k, r in rates:
            fh.write(f"{k},{r!r}\n")
    plots.plot_retrieval({"embedded": rates}, _p(out, "retrieval.png"))


def _truth_by_bag(query: data.Dataset, gallery: data.Dataset) -> dict:
    by_bag = {}
    for gi, b in enumerate(gallery.bag_id):
        by_bag.setdefault(str(b), []).append(gi)
    truth = {}
    for qi, b in enumerate(query.bag_id):
        matches = by_bag.get(str(b), [])
        if not matches:
            raise DataError(f"query bag {b!r} has no gallery counterpart")
        truth[qi] = matches
    return truth


_STAGES = (
    ("synth", stage_synth),
    ("train-coarse", stage_train_coarse),
    ("prune", stage_prune),
    ("select", stage_select),
    ("embed", stage_embed),
    ("cluster", stage_cluster),
    ("score", stage_score),
    ("evaluate", stage_evaluate),
)


def write_manifest(cfg: PipelineConfig, out: str) -> None:
    manifest = {
        "config": asdict(cfg),
        "ctfcad_version": ctfcad.__version__,
        "numpy_version": np.__version__,
        "seed": cfg.seed,
    }
    with open(_p(out, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def run_pipeline(cfg: PipelineConfig, out: str) -> None:
    """Execute all stages in order; equivalent to the subcommand chain."""
    os.makedirs(out, exist_ok=True)
    write_manifest(cfg, out)
    for name, fn in _STAGES:
        try:
            fn(cfg, out)
        except Exception as exc:
            first = str(exc.args[0]) if exc.args else str(exc)
            exc.args = (f"[stage {name}] {first}",) + tuple(exc.args[1:])
            raise
