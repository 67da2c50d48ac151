"""Evaluation protocol: windowing, leakage-free cross-validation, grid search.

The pipeline per acquisition is calibrate -> IQR subcarrier filter ->
rolling-MAD repair, then non-overlapping windows, then one feature
vector per window. Cross-validation folds operate on the feature
matrix; the z-score scaler and the mRMR ranking are fit strictly inside
the training rows of each fold (the deliberately leaky variant fits
them on everything and exists only to power the leakage audit).

Two split modes:

* ``per_acquisition_holdout`` - one fold per distinct sample index, so
  windows of a held-out acquisition can never sit in training (the
  4-train / 1-test design);
* ``per_window_stratified`` - seeded stratified k-fold over windows.

Every fit records which row ids it touched (``fit_audit``), making the
no-test-rows-at-fit-time invariant directly checkable.
"""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass, field, replace

import numpy as np

from . import calib, clean, features, metrics, select
from .classify import ModelSpec, fit
from .errors import InsufficientData, RecordTooShort
from .model import CsiMatrix, Dataset, FeatureMatrix, Hand, ScoreMatrix, SubjectLabel
from .synth import split_attack

SPLIT_MODES = ("per_acquisition_holdout", "per_window_stratified")
NORMALIZATIONS = ("within_fold_zscore", "global_zscore_leaky")
HAND_FILTERS = ("right", "left", "pooled")


@dataclass(frozen=True)
class PreprocessConfig:
    calibrate: bool = True
    cfo_scope: str = "per_sample"
    iqr_filter: bool = True
    mad_window: int | None = 9


@dataclass(frozen=True)
class ProtocolConfig:
    window_size: int = 50
    window_stride: int | None = None  # None means non-overlapping
    folds: int = 10
    split_mode: str = "per_acquisition_holdout"
    normalization: str = "within_fold_zscore"
    selection_k: int = 16
    mi_bins: int = 10
    binning: str = "equal_frequency"
    hand_filter: str = "right"
    feature_groups: frozenset[str] = frozenset(features.ALL_GROUPS)
    preprocess: PreprocessConfig = PreprocessConfig()
    grids: dict = field(default_factory=dict)  # model kind -> {param: [values]}
    fcs_bins: int = 50
    bioquake_resamples: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.window_size < 8:
            raise ValueError("window_size must be >= 8")
        if self.folds < 2:
            raise ValueError("folds must be >= 2")
        stride = self.window_stride
        if stride is not None and stride < 1:
            raise ValueError("window_stride must be >= 1")
        if self.split_mode not in SPLIT_MODES:
            raise ValueError(f"split_mode must be one of {SPLIT_MODES}")
        if self.normalization not in NORMALIZATIONS:
            raise ValueError(f"normalization must be one of {NORMALIZATIONS}")
        if self.hand_filter not in HAND_FILTERS:
            raise ValueError(f"hand_filter must be one of {HAND_FILTERS}")
        if self.selection_k < 1:
            raise ValueError("selection_k must be >= 1")
        object.__setattr__(self, "feature_groups", frozenset(self.feature_groups))

    @property
    def stride(self) -> int:
        return self.window_stride if self.window_stride is not None else self.window_size

    def feature_config(self) -> features.FeatureSetConfig:
        return features.FeatureSetConfig(enabled_groups=self.feature_groups)

    def mrmr_config(self) -> select.MrmrConfig:
        return select.MrmrConfig(self.selection_k, self.mi_bins, self.binning)

    def to_dict(self) -> dict:
        return {
            "window_size": self.window_size,
            "window_stride": self.window_stride,
            "folds": self.folds,
            "split_mode": self.split_mode,
            "normalization": self.normalization,
            "selection_k": self.selection_k,
            "mi_bins": self.mi_bins,
            "binning": self.binning,
            "hand_filter": self.hand_filter,
            "feature_groups": sorted(self.feature_groups),
            "preprocess": {
                "calibrate": self.preprocess.calibrate,
                "cfo_scope": self.preprocess.cfo_scope,
                "iqr_filter": self.preprocess.iqr_filter,
                "mad_window": self.preprocess.mad_window,
            },
            "grids": self.grids,
            "fcs_bins": self.fcs_bins,
            "bioquake_resamples": self.bioquake_resamples,
            "seed": self.seed,
        }

    def digest(self) -> str:
        return hashlib.sha256(
            json.dumps(self.to_dict(), sort_keys=True).encode()
        ).hexdigest()


def protocol_from_dict(d: dict) -> ProtocolConfig:
    pp = d.get("preprocess", {})
    return ProtocolConfig(
        window_size=int(d.get("window_size", 50)),
        window_stride=d.get("window_stride"),
        folds=int(d.get("folds", 10)),
        split_mode=d.get("split_mode", "per_acquisition_holdout"),
        normalization=d.get("normalization", "within_fold_zscore"),
        selection_k=int(d.get("selection_k", 16)),
        mi_bins=int(d.get("mi_bins", 10)),
        binning=d.get("binning", "equal_frequency"),
        hand_filter=d.get("hand_filter", "right"),
        feature_groups=frozenset(d.get("feature_groups", features.ALL_GROUPS)),
        preprocess=PreprocessConfig(
            calibrate=bool(pp.get("calibrate", True)),
            cfo_scope=pp.get("cfo_scope", "per_sample"),
            iqr_filter=bool(pp.get("iqr_filter", True)),
            mad_window=pp.get("mad_window", 9),
        ),
        grids=dict(d.get("grids", {})),
        fcs_bins=int(d.get("fcs_bins", 50)),
        bioquake_resamples=int(d.get("bioquake_resamples", 200)),
        seed=int(d.get("seed", 0)),
    )


# --- windowing -----------------------------------------------------------------

def window_dataset(dataset: Dataset, cfg: ProtocolConfig) -> list[tuple[CsiMatrix, SubjectLabel]]:
    """Cut every acquisition into contiguous windows of ``window_size``.

    Default stride equals the window size (non-overlapping); a trailing
    remainder shorter than one window is dropped. Window provenance
    (record index, start sample) lands in the window matrix metadata.
    """
    out = []
    for record_index, (matrix, label) in enumerate(dataset):
        if matrix.n_samples < cfg.window_size:
            raise RecordTooShort(
                f"record {record_index} ({label.subject_id}/sample {label.sample_index}) "
                f"has T={matrix.n_samples} < window_size={cfg.window_size}"
            )
        for start in range(0, matrix.n_samples - cfg.window_size + 1, cfg.stride):
            window = CsiMatrix(
                values=matrix.values[:, start : start + cfg.window_size],
                freqs=matrix.freqs,
                sample_rate_hint=matrix.sample_rate_hint,
                meta={**matrix.meta, "record_index": record_index, "window_start": start},
            )
            out.append((window, label))
    return out


def preprocess_record(matrix: CsiMatrix, cfg: PreprocessConfig) -> CsiMatrix:
    """calibrate -> IQR subcarrier filter -> rolling-MAD temporal repair."""
    if cfg.calibrate:
        matrix, _ = calib.calibrate(matrix, cfo_scope=cfg.cfo_scope)
    if cfg.iqr_filter:
        matrix, _ = clean.iqr_subcarrier_filter(matrix)
    if cfg.mad_window is not None:
        matrix, _ = clean.mad_temporal_repair(matrix, cfg.mad_window)
    return matrix


@dataclass(frozen=True)
class WindowSet:
    """Feature matrix for all windows plus per-window provenance."""

    matrix: FeatureMatrix
    subjects: tuple[str, ...]
    sample_indices: tuple[int, ...]
    record_indices: tuple[int, ...]
    window_starts: tuple[int, ...]


def _apply_hand_filter(dataset: Dataset, hand_filter: str) -> Dataset:
    if hand_filter == "pooled":
        return dataset
    wanted = Hand.RIGHT if hand_filter == "right" else Hand.LEFT
    return dataset.filter(lambda lab: lab.hand in (wanted, Hand.UNSPECIFIED))


def prepare_windows(dataset: Dataset, cfg: ProtocolConfig) -> WindowSet:
    """Run the per-record pipeline and extract one feature vector per window."""
    dataset = _apply_hand_filter(dataset, cfg.hand_filter)
    if len(dataset) == 0:
        raise InsufficientData("no records left after the hand filter")
    feature_cfg = cfg.feature_config()
    processed = Dataset(
        tuple((preprocess_record(m, cfg.preprocess), lab) for m, lab in dataset)
    )
    windows = window_dataset(processed, cfg)
    vectors = [features.extract_all(w, feature_cfg) for w, _ in windows]
    labels = tuple(lab.subject_id for _, lab in windows)
    return WindowSet(
        matrix=FeatureMatrix.from_vectors(vectors, labels),
        subjects=labels,
        sample_indices=tuple(lab.sample_index for _, lab in windows),
        record_indices=tuple(w.meta["record_index"] for w, _ in windows),
        window_starts=tuple(w.meta["window_start"] for w, _ in windows),
    )


# --- fold construction -----------------------------------------------------------

def stratified_kfold(labels, folds: int, seed: int) -> list[np.ndarray]:
    """Deterministic stratified fold assignment; returns test-index arrays.

    Per class, indices are shuffled and dealt round-robin with a
    rotating starting fold so remainders spread evenly: every fold gets
    the proportional share of each class, off by at most one window.
    """
    labels = np.asarray(labels)
    rng = np.random.default_rng([seed, 7919])
    assignment = np.empty(labels.shape[0], dtype=np.intp)
    offset = 0
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        rng.shuffle(idx)
        assignment[idx] = (np.arange(idx.size) + offset) % folds
        offset += idx.size % folds
    return [np.flatnonzero(assignment == f) for f in range(folds)]


def make_folds(ws: WindowSet, cfg: ProtocolConfig) -> list[tuple[np.ndarray, np.ndarray]]:
    """(train_idx, test_idx) pairs; a true partition of all windows."""
    n = ws.matrix.n_rows
    if len(set(ws.subjects)) < 2:
        raise InsufficientData("need at least two subjects")
    if cfg.split_mode == "per_acquisition_holdout":
        sample_ids = sorted(set(ws.sample_indices))
        if len(sample_ids) < 2:
            raise InsufficientData("per_acquisition_holdout needs >= 2 acquisitions per subject")
        sample_arr = np.asarray(ws.sample_indices)
        test_sets = [np.flatnonzero(sample_arr == s) for s in sample_ids]
    else:
        if n < cfg.folds:
            raise InsufficientData(f"{n} windows cannot fill {cfg.folds} folds")
        test_sets = stratified_kfold(ws.subjects, cfg.folds, cfg.seed)
    all_idx = np.arange(n)
    folds = []
    subjects = np.asarray(ws.subjects)
    all_subjects = set(ws.subjects)
    for fold_id, test_idx in enumerate(test_sets):
        train_idx = np.setdiff1d(all_idx, test_idx)
        if set(subjects[train_idx]) != all_subjects:
            raise InsufficientData(
                f"fold {fold_id} training set is missing a subject entirely"
            )
        folds.append((train_idx, test_idx))
    return folds


# --- scaling -----------------------------------------------------------------------

@dataclass(frozen=True)
class Scaler:
    mean: np.ndarray
    std: np.ndarray

    @staticmethod
    def fit(values: np.ndarray) -> "Scaler":
        std = values.std(axis=0)
        return Scaler(values.mean(axis=0), np.where(std > 0, std, 1.0))

    def transform(self, values: np.ndarray) -> np.ndarray:
        return (values - self.mean) / self.std


# --- cross-validation ------------------------------------------------------------

@dataclass(frozen=True)
class FoldAudit:
    """Row ids touched at fit time vs rows scored, per fold."""

    fold_id: int
    fit_rows: tuple[int, ...]
    test_rows: tuple[int, ...]
    selected_features: tuple[str, ...]


@dataclass(frozen=True)
class LeakageAudit:
    leaky_accuracy: float
    clean_accuracy: float
    delta: float
    flagged: bool


@dataclass(frozen=True)
class RunResult:
    reports: dict[str, metrics.SecurityReport]
    scores: dict[str, ScoreMatrix]
    fold_accuracies: dict[str, tuple[float, ...]]
    fit_audits: tuple[FoldAudit, ...]
    feature_ranking: tuple[select.RankedFeature, ...]
    leakage_audit: LeakageAudit | None
    config_digest: str
    dataset_digest: str
    seed: int

    def digest(self) -> str:
        """Stable digest over every reported number plus provenance."""
        payload = {
            "config": self.config_digest,
            "dataset": self.dataset_digest,
            "seed": self.seed,
            "reports": {name: r.to_dict() for name, r in sorted(self.reports.items())},
            "fold_accuracies": {k: list(v) for k, v in sorted(self.fold_accuracies.items())},
        }
        return hashlib.sha256(
            json.dumps(payload, sort_keys=True).encode()
        ).hexdigest()


def _cv_scores(
    ws: WindowSet, cfg: ProtocolConfig, models: list[ModelSpec]
) -> tuple[dict[str, list[ScoreMatrix]], dict[str, list[float]], list[FoldAudit]]:
    names = [m.name() for m in models]
    if len(set(names)) != len(names):
        raise ValueError(f"duplicate model names in one run: {names}")
    folds = make_folds(ws, cfg)
    per_model_scores: dict[str, list[ScoreMatrix]] = {m.name(): [] for m in models}
    per_model_acc: dict[str, list[float]] = {m.name(): [] for m in models}
    audits: list[FoldAudit] = []
    values = ws.matrix.values
    labels = np.asarray(ws.subjects)
    mrmr_cfg = cfg.mrmr_config()

    for fold_id, (train_idx, test_idx) in enumerate(folds):
        if cfg.normalization == "global_zscore_leaky":
            fit_rows = np.arange(ws.matrix.n_rows)
        else:
            fit_rows = train_idx
        scaler = Scaler.fit(values[fit_rows])
        fit_matrix = FeatureMatrix(
            ws.matrix.feature_names,
            scaler.transform(values[fit_rows]),
            tuple(labels[fit_rows]),
        )
        ranking = select.mrmr_rank(fit_matrix, labels[fit_rows], mrmr_cfg)
        selected = tuple(r.name for r in ranking)
        audits.append(
            FoldAudit(fold_id, tuple(map(int, fit_rows)), tuple(map(int, test_idx)), selected)
        )

        train_matrix = FeatureMatrix(
            ws.matrix.feature_names,
            scaler.transform(values[train_idx]),
            tuple(labels[train_idx]),
        ).select(selected)
        test_matrix = FeatureMatrix(
            ws.matrix.feature_names,
            scaler.transform(values[test_idx]),
            tuple(labels[test_idx]),
        ).select(selected)

        for spec in models:
            model = fit(spec, train_matrix)
            scores = model.predict_proba(test_matrix)
            per_model_scores[spec.name()].append(scores)
            correct = sum(
                p == t for p, t in zip(scores.predicted_labels(), scores.true_labels)
            )
            per_model_acc[spec.name()].append(correct / max(scores.n_rows, 1))
    return per_model_scores, per_model_acc, audits


def run_cv(dataset: Dataset, cfg: ProtocolConfig, models: list[ModelSpec],
           ws: WindowSet | None = None) -> RunResult:
    """Full leak-audited cross-validation for a list of model specs.

    Every window is scored exactly once; pooled scores feed the metric
    battery. A descriptive full-dataset mRMR ranking is attached for
    plotting (it never feeds any classifier).
    """
    if len(dataset.subject_ids()) < 2:
        raise InsufficientData("need at least two subjects")
    if ws is None:
        ws = prepare_windows(dataset, cfg)
    per_model_scores, per_model_acc, audits = _cv_scores(ws, cfg, models)

    reports = {}
    pooled = {}
    for spec in models:
        name = spec.name()
        pooled[name] = ScoreMatrix.concatenate(per_model_scores[name])
        reports[name] = metrics.build_security_report(
            name,
            pooled[name],
            fcs_bins=cfg.fcs_bins,
            resamples=cfg.bioquake_resamples,
            seed=cfg.seed,
        )
    full_scaled = FeatureMatrix(
        ws.matrix.feature_names,
        Scaler.fit(ws.matrix.values).transform(ws.matrix.values),
        ws.matrix.labels,
    )
    ranking = tuple(select.mrmr_rank(full_scaled, np.asarray(ws.subjects), cfg.mrmr_config()))
    return RunResult(
        reports=reports,
        scores=pooled,
        fold_accuracies={k: tuple(v) for k, v in per_model_acc.items()},
        fit_audits=tuple(audits),
        feature_ranking=ranking,
        leakage_audit=None,
        config_digest=cfg.digest(),
        dataset_digest=dataset.digest(),
        seed=cfg.seed,
    )


def leakage_audit(dataset: Dataset, cfg: ProtocolConfig, model: ModelSpec,
                  ws: WindowSet | None = None) -> LeakageAudit:
    """Clean pipeline vs global-fit baseline, flagged on the 1 p.p. rule."""
    if ws is None:
        ws = prepare_windows(dataset, cfg)
    clean_cfg = replace(cfg, normalization="within_fold_zscore")
    leaky_cfg = replace(cfg, normalization="global_zscore_leaky")
    _, clean_acc, _ = _cv_scores(ws, clean_cfg, [model])
    _, leaky_acc, _ = _cv_scores(ws, leaky_cfg, [model])

    def pooled_accuracy(acc_per_fold, scores_cfg):
        folds = make_folds(ws, scores_cfg)
        sizes = np.array([len(test) for _, test in folds], dtype=np.float64)
        return float(np.sum(np.asarray(acc_per_fold) * sizes) / sizes.sum())

    clean_value = pooled_accuracy(clean_acc[model.name()], clean_cfg)
    leaky_value = pooled_accuracy(leaky_acc[model.name()], leaky_cfg)
    delta = leaky_value - clean_value
    return LeakageAudit(
        leaky_accuracy=leaky_value,
        clean_accuracy=clean_value,
        delta=delta,
        flagged=bool(abs(delta) > 0.01),
    )


# --- grid search -------------------------------------------------------------------

@dataclass(frozen=True)
class GridCell:
    hyperparams: dict
    mean_accuracy: float
    eer_mean: float
    fold_accuracies: tuple[float, ...]


def grid_search(dataset: Dataset, cfg: ProtocolConfig, model_kind: str,
                grid: dict[str, list] | None = None, ws: WindowSet | None = None
                ) -> tuple[ModelSpec, list[GridCell]]:
    """Exhaustive CV over the cartesian product of a hyperparameter grid.

    Defaults to the protocol's configured grid for the model kind. Best
    cell by mean CV accuracy; ties break toward lower mean per-class
    EER, then lexicographic hyperparameter order.
    """
    if grid is None:
        grid = cfg.grids.get(model_kind)
    if not grid:
        raise ValueError(f"no hyperparameter grid for {model_kind!r}")
    if ws is None:
        ws = prepare_windows(dataset, cfg)
    names = sorted(grid)
    table: list[GridCell] = []
    for combo in itertools.product(*(grid[n] for n in names)):
        hp = dict(zip(names, combo))
        spec = ModelSpec(model_kind, hp, seed=cfg.seed)
        scores, accs, _ = _cv_scores(ws, cfg, [spec])
        pooled = ScoreMatrix.concatenate(scores[spec.name()])
        eers = [metrics.eer_per_class(pooled, c).eer for c in pooled.class_ids]
        table.append(
            GridCell(
                hyperparams=hp,
                mean_accuracy=float(np.mean(accs[spec.name()])),
                eer_mean=float(np.mean(eers)),
                fold_accuracies=tuple(accs[spec.name()]),
            )
        )
    order = sorted(
        range(len(table)),
        key=lambda i: (
            -table[i].mean_accuracy,
            table[i].eer_mean,
            json.dumps(table[i].hyperparams, sort_keys=True),
        ),
    )
    best = table[order[0]]
    return ModelSpec(model_kind, best.hyperparams, seed=cfg.seed), table


# --- attack evaluation ---------------------------------------------------------------

@dataclass(frozen=True)
class AttackReport:
    victim: str
    attack_kind: str
    n_attack_windows: int
    victim_threshold: float
    far_on_attack: float
    attack_scores: np.ndarray
    victim_fullfit_scores: np.ndarray


def attack_report(dataset: Dataset, cfg: ProtocolConfig, model: ModelSpec,
                  genuine_result: RunResult | None = None,
                  genuine_ws: WindowSet | None = None) -> AttackReport:
    """FAR of injected attack windows at the victim's own EER threshold.

    The victim threshold comes from a clean CV run over the genuine
    records; the scoring model is then fit on all genuine windows
    (scaler and selection from genuine data only) and applied to the
    attack windows. The victim's own windows are scored under the same
    full fit so attack and genuine score distributions are comparable.
    """
    genuine_d, attack_d = split_attack(dataset)
    if len(attack_d) == 0:
        raise InsufficientData("dataset contains no attack records")
    victim = attack_d.records[0][0].meta.get("victim")
    attack_kind = attack_d.records[0][0].meta.get("attack", "unknown")
    if genuine_ws is None:
        genuine_ws = prepare_windows(genuine_d, cfg)
    if genuine_result is None:
        genuine_result = run_cv(genuine_d, cfg, [model], ws=genuine_ws)
    report = genuine_result.reports[model.name()]
    threshold = next(e.threshold for e in report.eer_results if e.class_id == victim)

    scaler = Scaler.fit(genuine_ws.matrix.values)
    full = FeatureMatrix(
        genuine_ws.matrix.feature_names,
        scaler.transform(genuine_ws.matrix.values),
        genuine_ws.matrix.labels,
    )
    ranking = select.mrmr_rank(full, np.asarray(genuine_ws.subjects), cfg.mrmr_config())
    selected = tuple(r.name for r in ranking)
    train = full.select(selected)
    trained = fit(model, train)

    attack_ws = prepare_windows(attack_d, cfg)
    attack_matrix = FeatureMatrix(
        attack_ws.matrix.feature_names,
        scaler.transform(attack_ws.matrix.values),
        attack_ws.matrix.labels,
    ).select(selected)
    scores = trained.predict_proba(attack_matrix)
    victim_scores = scores.column(victim)
    self_scores = trained.predict_proba(train).column(victim)
    victim_rows = np.array([s == victim for s in genuine_ws.subjects])
    return AttackReport(
        victim=victim,
        attack_kind=attack_kind,
        n_attack_windows=int(victim_scores.shape[0]),
        victim_threshold=float(threshold),
        far_on_attack=float(np.mean(victim_scores >= threshold)),
        attack_scores=victim_scores,
        victim_fullfit_scores=self_scores[victim_rows],
    )
