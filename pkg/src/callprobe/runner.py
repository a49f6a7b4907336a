"""Experiment orchestration: nested cross-validation with exhaustive grid
search, selection by lowest mean development loss, final-model fitting and
single-shot test evaluation, layerwise sweeps, and deterministic artifacts.

Every (grid point, inner turn) training is an independent job with its own
seed derived from (base seed, outer fold, family, grid index, inner index),
so the parallelism degree cannot change any result. Test-fold rows are
guarded by an explicit leakage check before any training set is formed.
"""

import csv
import itertools
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import load_plan
from .errors import (
    AllClassesDegenerate,
    LeakageError,
    MissingLayerStore,
    NonTemporalInput,
    SpecError,
)
from .evaluation import (
    SUPERVISED_REFERENCE_AUC,
    EvalReport,
    ScoreMatrix,
    export_averaged_roc,
    export_curves,
    fold_average,
    macro_metrics,
)
from .probes import FAMILIES, ProbeConfig, RECURRENT_FAMILIES
from .store import mean_pool, read_store
from .training import (
    ProbeDataset,
    predict_probabilities,
    save_checkpoint,
    train_probe,
)

DEFAULT_LEARNING_RATES = (1e-3, 1e-4, 1e-5, 1e-6)
DEFAULT_DROPOUTS = (0.0, 0.2, 0.4, 0.8)
DEFAULT_HIDDENS = (32, 64, 128, 256)
DEFAULT_NUM_LAYERS = (1, 2)

FINAL_FIT_MODES = ("retrain", "best_inner")


@dataclass
class ExperimentSpec:
    stores: dict  # layer_tag -> store path
    fold_plan: str
    families: list
    output_dir: str
    learning_rates: tuple = DEFAULT_LEARNING_RATES
    dropouts: tuple = DEFAULT_DROPOUTS
    hiddens: tuple = DEFAULT_HIDDENS
    num_layers: tuple = DEFAULT_NUM_LAYERS
    batch_size: int = 32
    max_epochs: int = 100
    patience: int = 3
    parallelism: int = 1
    seed: int = 0
    final_fit: str = "retrain"
    layerwise_outer_turn: int = 0

    def validate(self) -> None:
        if not self.stores:
            raise SpecError("spec lists no stores")
        if not self.families:
            raise SpecError("spec lists no classifier families")
        for family in self.families:
            if family not in FAMILIES:
                raise SpecError(f"unknown classifier family {family!r}")
        for grid_name in ("learning_rates", "dropouts", "hiddens", "num_layers"):
            if len(getattr(self, grid_name)) == 0:
                raise SpecError(f"empty grid: {grid_name}")
        if self.final_fit not in FINAL_FIT_MODES:
            raise SpecError(f"final_fit must be one of {FINAL_FIT_MODES}")
        if self.parallelism < 1:
            raise SpecError("parallelism must be at least 1")
        for tag, path in self.stores.items():
            if not Path(path).exists():
                raise MissingLayerStore(f"store for layer {tag!r} not found: {path}")
        if not Path(self.fold_plan).exists():
            raise SpecError(f"fold plan not found: {self.fold_plan}")

    @classmethod
    def from_json(cls, path: str | Path) -> "ExperimentSpec":
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise SpecError(f"cannot read spec {path}: {exc}") from exc
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise SpecError(f"unknown spec fields: {sorted(unknown)}")
        missing = {"stores", "fold_plan", "families", "output_dir"} - set(doc)
        if missing:
            raise SpecError(f"missing spec fields: {sorted(missing)}")
        for grid_name in ("learning_rates", "dropouts", "hiddens", "num_layers"):
            if grid_name in doc:
                doc[grid_name] = tuple(doc[grid_name])
        spec = cls(**doc)
        spec.validate()
        return spec

    def scientific_dict(self) -> dict:
        """Spec fields that determine the results (scheduling knobs excluded)."""
        return {
            "stores": {tag: str(path) for tag, path in sorted(self.stores.items())},
            "fold_plan": str(self.fold_plan),
            "families": list(self.families),
            "learning_rates": list(self.learning_rates),
            "dropouts": list(self.dropouts),
            "hiddens": list(self.hiddens),
            "num_layers": list(self.num_layers),
            "batch_size": self.batch_size,
            "max_epochs": self.max_epochs,
            "patience": self.patience,
            "seed": self.seed,
            "final_fit": self.final_fit,
            "layerwise_outer_turn": self.layerwise_outer_turn,
        }


@dataclass(frozen=True)
class GridPoint:
    family: str
    learning_rate: float
    dropout: float = 0.0
    hidden: int = 0
    num_layers: int = 0

    @property
    def tie_key(self):
        # equal mean dev losses resolve to the lower learning rate, then the
        # smaller hidden state, fewer layers, lower dropout
        return (self.learning_rate, self.hidden, self.num_layers, self.dropout)

    def to_config(self, spec: ExperimentSpec, seed: int) -> ProbeConfig:
        recurrent = self.family in RECURRENT_FAMILIES
        return ProbeConfig(
            family=self.family,
            num_layers=self.num_layers if recurrent else 1,
            hidden=self.hidden if recurrent else 64,
            dropout=self.dropout if recurrent else 0.0,
            learning_rate=self.learning_rate,
            batch_size=spec.batch_size,
            max_epochs=spec.max_epochs,
            patience=spec.patience,
            seed=seed,
        )

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "learning_rate": self.learning_rate,
            "dropout": self.dropout,
            "hidden": self.hidden,
            "num_layers": self.num_layers,
        }


def family_grid(spec: ExperimentSpec, family: str) -> list:
    if family in RECURRENT_FAMILIES:
        points = [
            GridPoint(family, lr, dropout, hidden, layers)
            for lr, hidden, layers, dropout in itertools.product(
                spec.learning_rates, spec.hiddens, spec.num_layers, spec.dropouts)
        ]
    else:
        points = [GridPoint(family, lr) for lr in spec.learning_rates]
    return sorted(points, key=lambda p: p.tie_key)


def derive_seed(base_seed: int, outer_fold: int, family_index: int,
                grid_index: int, inner_index: int) -> int:
    ss = np.random.SeedSequence((base_seed, outer_fold, family_index,
                                 grid_index, inner_index))
    return int(ss.generate_state(1, np.uint32)[0])


def select_grid_point(means, grid) -> int | None:
    """Index of the lowest mean development loss; ties break on the grid
    point's (learning rate, hidden, layers, dropout) key. None-valued means
    (aborted points) are skipped; all-None returns None."""
    candidates = [(means[gi], grid[gi].tie_key, gi) for gi in range(len(grid))
                  if means[gi] is not None]
    if not candidates:
        return None
    return min(candidates)[2]


# ---------------------------------------------------------------------------
# store loading and dataset assembly


@dataclass
class LayerData:
    tag: str
    pooled: np.ndarray  # (N, D) mean-pooled vectors
    sequences: list  # list of (T, D) float64 arrays
    temporal: bool
    dim: int


@dataclass
class ExperimentData:
    layers: dict  # tag -> LayerData
    labels: np.ndarray  # (N,)
    folds: np.ndarray  # (N,)
    segment_ids: list
    class_names: list
    overlap_sets: list  # per row, set of acceptable labels
    plan: object

    @property
    def n_classes(self) -> int:
        return len(self.class_names)


def load_experiment_data(spec: ExperimentSpec) -> ExperimentData:
    plan, plan_segments, plan_classes = load_plan(spec.fold_plan)
    overlap_by_id = {s.segment_id: set(s.overlapping_labels) for s in plan_segments}

    layers = {}
    reference_ids = None
    labels = folds = None
    class_names = plan_classes
    for tag, path in spec.stores.items():
        if not Path(path).exists():
            raise MissingLayerStore(f"store for layer {tag!r} not found: {path}")
        sequences, manifest = read_store(path)
        ids = manifest.segment_ids()
        if reference_ids is None:
            reference_ids = ids
            labels = np.array([s.label for s in manifest.segments], dtype=int)
            folds = np.array([s.fold for s in manifest.segments], dtype=int)
            if manifest.classes:
                class_names = manifest.classes
        elif ids != reference_ids:
            raise SpecError(f"store {tag!r} covers different segments than the first store")
        layers[tag] = LayerData(
            tag=tag,
            pooled=np.stack([mean_pool(s) for s in sequences]).astype(np.float64),
            sequences=[np.asarray(s.values, dtype=np.float64) for s in sequences],
            temporal=manifest.temporal,
            dim=manifest.dim,
        )

    plan_ids = set(plan.assignment)
    if not plan_ids.issuperset(reference_ids):
        raise SpecError("fold plan does not cover every store segment")
    for row, seg_id in enumerate(reference_ids):
        if plan.assignment[seg_id] != folds[row]:
            raise SpecError(f"fold disagreement for segment {seg_id} between "
                            "store manifest and fold plan")
    if not class_names:
        class_names = [f"class{c:02d}" for c in range(int(labels.max()) + 1)]
    overlap_sets = [overlap_by_id.get(seg_id, {int(labels[row])})
                    for row, seg_id in enumerate(reference_ids)]
    return ExperimentData(layers, labels, folds, reference_ids,
                          list(class_names), overlap_sets, plan)


def gather_dataset(layer: LayerData, labels: np.ndarray, rows: np.ndarray,
                   family: str) -> ProbeDataset:
    if family in RECURRENT_FAMILIES:
        if not layer.temporal:
            raise NonTemporalInput(
                f"{family} probes cannot train on the non-temporal layer {layer.tag!r}")
        return ProbeDataset([layer.sequences[i] for i in rows], labels[rows])
    return ProbeDataset(layer.pooled[rows], labels[rows], temporal=layer.temporal)


def assert_no_leakage(folds: np.ndarray, rows: np.ndarray, test_fold: int) -> int:
    """Verify no selected row sits in the test fold; returns rows checked."""
    if np.any(folds[rows] == test_fold):
        raise LeakageError(f"test fold {test_fold} leaked into a training set")
    return int(rows.size)


# ---------------------------------------------------------------------------
# selection jobs (top level so a process pool can pickle them)


def _run_selection_job(payload):
    key, train, dev, config_kwargs, n_classes, want_scores = payload
    config = ProbeConfig(**config_kwargs)
    params, trace = train_probe(train, dev, config, n_classes)
    usable = not trace.aborted and np.isfinite(trace.best_dev_loss)
    scores = predict_probabilities(params, dev, config) if want_scores and usable else None
    return key, trace.best_dev_loss, usable, scores


def _run_jobs(jobs, parallelism: int):
    if parallelism <= 1 or len(jobs) <= 1:
        results = [_run_selection_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(_run_selection_job, jobs))
    return {r[0]: r[1:] for r in results}


# ---------------------------------------------------------------------------
# one outer turn


@dataclass
class RunResult:
    outer_fold: int
    family: str
    selected: GridPoint | None
    dev_loss_table: list  # grid-major: list over grid of list over inner turns
    aborted_grid_points: list
    test_report: EvalReport | None
    final_trace: dict | None
    failed: bool = False
    leakage_checks: int = 0

    def to_dict(self, grid) -> dict:
        return {
            "outer_fold": self.outer_fold,
            "family": self.family,
            "grid": [g.to_dict() for g in grid],
            "selected": self.selected.to_dict() if self.selected else None,
            "dev_loss_table": self.dev_loss_table,
            "aborted_grid_points": self.aborted_grid_points,
            "test_report": self.test_report.to_dict() if self.test_report else None,
            "final_trace": self.final_trace,
            "failed": self.failed,
            "leakage_checks": self.leakage_checks,
        }


def run_outer_turn(data: ExperimentData, spec: ExperimentSpec, family: str,
                   outer_index: int, layer_tag: str | None = None) -> RunResult:
    """Grid-search on the inner turns, refit, evaluate once on the test fold."""
    plan = data.plan
    outer = plan.outer_turns[outer_index]
    test_fold = outer.test_fold
    family_index = spec.families.index(family) if family in spec.families else 0
    layer = data.layers[layer_tag] if layer_tag else next(iter(data.layers.values()))
    grid = family_grid(spec, family)
    k = plan.k

    leakage_checks = 0
    jobs = []
    for gi, point in enumerate(grid):
        for ii, inner in enumerate(outer.inner_turns):
            train_rows = np.flatnonzero(np.isin(data.folds, inner.train_folds))
            dev_rows = np.flatnonzero(data.folds == inner.dev_fold)
            leakage_checks += assert_no_leakage(data.folds, train_rows, test_fold)
            leakage_checks += assert_no_leakage(data.folds, dev_rows, test_fold)
            seed = derive_seed(spec.seed, test_fold, family_index, gi, ii)
            config = point.to_config(spec, seed)
            jobs.append((
                (gi, ii),
                gather_dataset(layer, data.labels, train_rows, family),
                gather_dataset(layer, data.labels, dev_rows, family),
                config.__dict__.copy(),
                data.n_classes,
                False,
            ))
    outcomes = _run_jobs(jobs, spec.parallelism)

    # a grid point is aborted only when an inner training could not produce a
    # usable model (non-finite gradients); an early stop that merely restored
    # the best epoch still competes in the selection
    n_inner = len(outer.inner_turns)
    dev_loss_table = [[None] * n_inner for _ in grid]
    aborted = []
    means = []
    for gi, point in enumerate(grid):
        bad = False
        for ii in range(n_inner):
            loss, usable, _ = outcomes[(gi, ii)]
            dev_loss_table[gi][ii] = float(loss) if np.isfinite(loss) else None
            if not usable:
                bad = True
        if bad:
            aborted.append(gi)
            means.append(None)
        else:
            means.append(float(np.mean(dev_loss_table[gi])))
    selected_gi = select_grid_point(means, grid)
    if selected_gi is None:
        return RunResult(test_fold, family, None, dev_loss_table, aborted,
                         None, None, failed=True, leakage_checks=leakage_checks)
    selected = grid[selected_gi]

    # final fit with the selected configuration
    final_seed = derive_seed(spec.seed, test_fold, family_index, selected_gi, k - 1)
    if spec.final_fit == "retrain":
        pool_rows = np.flatnonzero(data.folds != test_fold)
        leakage_checks += assert_no_leakage(data.folds, pool_rows, test_fold)
        rng = np.random.default_rng(final_seed)
        perm = rng.permutation(pool_rows.size)
        n_dev = max(1, pool_rows.size // 10)
        dev_rows = pool_rows[perm[:n_dev]]
        train_rows = pool_rows[perm[n_dev:]]
        config = selected.to_config(spec, final_seed)
        params, trace = train_probe(
            gather_dataset(layer, data.labels, train_rows, family),
            gather_dataset(layer, data.labels, dev_rows, family),
            config, data.n_classes)
    else:  # best_inner: replay the winning inner training deterministically
        inner_losses = dev_loss_table[selected_gi]
        best_ii = int(np.argmin(inner_losses))
        inner = outer.inner_turns[best_ii]
        train_rows = np.flatnonzero(np.isin(data.folds, inner.train_folds))
        dev_rows = np.flatnonzero(data.folds == inner.dev_fold)
        seed = derive_seed(spec.seed, test_fold, family_index, selected_gi, best_ii)
        config = selected.to_config(spec, seed)
        params, trace = train_probe(
            gather_dataset(layer, data.labels, train_rows, family),
            gather_dataset(layer, data.labels, dev_rows, family),
            config, data.n_classes)

    test_rows = np.flatnonzero(data.folds == test_fold)
    probabilities = predict_probabilities(
        params, gather_dataset(layer, data.labels, test_rows, family), config)
    matrix = ScoreMatrix(probabilities, data.labels[test_rows],
                         [data.overlap_sets[i] for i in test_rows])
    try:
        report = macro_metrics(matrix, fold=test_fold)
    except AllClassesDegenerate:
        # a test fold with no scorable class fails this turn, not the run
        return RunResult(test_fold, family, selected, dev_loss_table, aborted,
                         None, trace.to_dict(), failed=True,
                         leakage_checks=leakage_checks)
    result = RunResult(test_fold, family, selected, dev_loss_table, aborted,
                       report, trace.to_dict(), leakage_checks=leakage_checks)
    result.params = params  # kept for checkpointing; not serialized
    result.config = config
    result.trace = trace
    return result


# ---------------------------------------------------------------------------
# full experiment


def _to_jsonable(obj):
    if isinstance(obj, dict):
        return {k: _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return [_to_jsonable(v) for v in obj.tolist()]
    return obj


@dataclass
class ExperimentOutcome:
    results_path: Path
    summaries: dict  # family -> FoldSummary
    failed_turns: list
    leakage_checks: int

    @property
    def partial_failure(self) -> bool:
        return bool(self.failed_turns)


def run_experiment(spec: ExperimentSpec) -> ExperimentOutcome:
    """Run every outer turn for every family and write all artifacts."""
    spec.validate()
    if len(spec.stores) != 1:
        raise SpecError("run_experiment takes exactly one store; "
                        "use the layerwise sweep for multi-layer specs")
    data = load_experiment_data(spec)
    out_dir = Path(spec.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "curves").mkdir(exist_ok=True)
    (out_dir / "checkpoints").mkdir(exist_ok=True)

    families_doc = {}
    summaries = {}
    failed_turns = []
    leakage_checks = 0
    for family in spec.families:
        grid = family_grid(spec, family)
        turns = []
        reports = []
        for outer_index in range(data.plan.k):
            result = run_outer_turn(data, spec, family, outer_index)
            leakage_checks += result.leakage_checks
            turns.append(result.to_dict(grid))
            if result.failed:
                failed_turns.append((family, result.outer_fold))
                continue
            reports.append(result.test_report)
            export_curves(result.test_report, out_dir / "curves",
                          prefix=f"{family}_")
            save_checkpoint(out_dir / "checkpoints" / f"{family}_fold{result.outer_fold}.ckpt",
                            result.params, result.config, result.trace)
        summary = fold_average(reports) if reports else None
        if summary is not None:
            summaries[family] = summary
            export_averaged_roc(reports, out_dir / "curves", prefix=f"{family}_")
        families_doc[family] = {
            "turns": turns,
            "summary": summary.to_dict() if summary else None,
        }

    results = {
        "spec": spec.scientific_dict(),
        "classes": data.class_names,
        "families": families_doc,
        "failed_turns": [list(t) for t in failed_turns],
        "leakage_checks": leakage_checks,
    }
    results_path = out_dir / "results.json"
    with open(results_path, "w", encoding="utf-8") as fh:
        json.dump(_to_jsonable(results), fh, indent=2, sort_keys=True)
        fh.write("\n")
    write_summary_tables(results, out_dir)
    return ExperimentOutcome(results_path, summaries, failed_turns, leakage_checks)


def write_summary_tables(results: dict, out_dir: str | Path) -> None:
    """summary.csv (per fold + mean) and summary.txt (one row per family)."""
    out_dir = Path(out_dir)
    with open(out_dir / "summary.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["family", "fold", "macro_auc", "macro_ap"])
        for family, doc in results["families"].items():
            for turn in doc["turns"]:
                if turn["test_report"]:
                    writer.writerow([family, turn["outer_fold"],
                                     repr(turn["test_report"]["macro_auc"]),
                                     repr(turn["test_report"]["macro_ap"])])
            if doc["summary"]:
                writer.writerow([family, "mean",
                                 repr(doc["summary"]["mean_auc"]),
                                 repr(doc["summary"]["mean_ap"])])
    lines = [f"{'family':<8} {'AUC':>8} {'mAP':>8}   (mean over outer test folds)"]
    for family, doc in results["families"].items():
        if doc["summary"]:
            lines.append(f"{family:<8} {doc['summary']['mean_auc']:8.4f} "
                         f"{doc['summary']['mean_ap']:8.4f}")
        else:
            lines.append(f"{family:<8} {'failed':>8} {'failed':>8}")
    lines.append("")
    for name, auc in sorted(SUPERVISED_REFERENCE_AUC.items()):
        lines.append(f"reference: end-to-end supervised system, {name} corpus, "
                     f"AUC {auc:.4f} (published value, not recomputed)")
    (out_dir / "summary.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# layerwise sweep


def layerwise_sweep(spec: ExperimentSpec) -> list:
    """Linear probing per layer on the inner turns of a single outer turn.

    For each layer the learning-rate grid is searched by mean development
    loss; the winning probe's development-fold scores (pooled over the inner
    turns) give one mAP per layer. Returns rows of
    (layer_index, layer_tag, dev_map, learning_rate) and writes layerwise.csv.
    """
    spec.validate()
    data = load_experiment_data(spec)
    plan = data.plan
    outer = plan.outer_turns[spec.layerwise_outer_turn]
    test_fold = outer.test_fold
    grid = [GridPoint("LR", lr) for lr in sorted(spec.learning_rates)]

    rows = []
    for layer_index, tag in enumerate(spec.stores):
        layer = data.layers[tag]
        jobs = []
        for gi, point in enumerate(grid):
            for ii, inner in enumerate(outer.inner_turns):
                train_rows = np.flatnonzero(np.isin(data.folds, inner.train_folds))
                dev_rows = np.flatnonzero(data.folds == inner.dev_fold)
                assert_no_leakage(data.folds, train_rows, test_fold)
                assert_no_leakage(data.folds, dev_rows, test_fold)
                seed = derive_seed(spec.seed, test_fold, 0, gi, ii)
                config = point.to_config(spec, seed)
                jobs.append((
                    (gi, ii),
                    gather_dataset(layer, data.labels, train_rows, "LR"),
                    gather_dataset(layer, data.labels, dev_rows, "LR"),
                    config.__dict__.copy(),
                    data.n_classes,
                    True,
                ))
        outcomes = _run_jobs(jobs, spec.parallelism)

        n_inner = len(outer.inner_turns)
        best = None
        for gi, point in enumerate(grid):
            if not all(outcomes[(gi, ii)][1] for ii in range(n_inner)):
                continue  # some inner training failed with non-finite gradients
            mean_loss = float(np.mean([outcomes[(gi, ii)][0] for ii in range(n_inner)]))
            key = (mean_loss, point.tie_key, gi)
            if best is None or key < best:
                best = key
        if best is None:
            raise SpecError(f"every grid point failed for layer {tag!r}")
        selected_gi = best[2]

        dev_scores = []
        dev_labels = []
        for ii, inner in enumerate(outer.inner_turns):
            dev_rows = np.flatnonzero(data.folds == inner.dev_fold)
            dev_scores.append(outcomes[(selected_gi, ii)][2])
            dev_labels.append(data.labels[dev_rows])
        matrix = ScoreMatrix(np.vstack(dev_scores), np.concatenate(dev_labels))
        report = macro_metrics(matrix, fold=test_fold, with_curves=False)
        rows.append((layer_index, tag, report.macro_ap,
                     grid[selected_gi].learning_rate))

    out_dir = Path(spec.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "layerwise.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["layer_index", "layer_tag", "dev_map", "learning_rate"])
        for row in rows:
            writer.writerow([row[0], row[1], repr(float(row[2])), repr(float(row[3]))])
    return rows
