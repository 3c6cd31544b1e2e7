"""Command-line surface: partition, train, unlearn, evaluate, export.

Configuration is a flat ``key=value`` text file; command-line flags
override file values, and every run writes its fully-resolved config next
to its outputs so the exact run can be replayed from that file alone.
Exit codes: 0 on success, 1 for usage or config errors, 2 for runtime
failures.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from dataclasses import dataclass, fields
from pathlib import Path

from fedkge.embedding import (
    ModelKind,
    load_adam,
    load_manifest,
    load_table,
    save_adam,
    save_table,
)
from fedkge.evaluation import macro_average
from fedkge.federation import (
    MODES,
    ClientState,
    RoundConfig,
    ServerState,
    evaluate_clients,
    init_client_state,
    localize_shard,
    make_mappings,
    merge_client_shards,
    run_federated_training,
    write_history_csv,
)
from fedkge.kg import (
    KnowledgeGraph,
    dump_vocabulary,
    load_triples,
    load_vocabulary,
    read_triples,
    write_triples,
)
from fedkge.losses import LossWeights
from fedkge.partition import (
    build_cooccurrence,
    degree_histogram,
    distribute,
    random_partition,
    shard_stats,
    spectral_partition,
)
from fedkge.unlearning import (
    UnlearnConfig,
    evaluate_forget,
    make_forget_spec,
    retrain_baseline,
    run_federated_unlearning,
)

WORKERS_ENV = "FEDKGE_WORKERS"


class UsageError(Exception):
    """Bad flags or config values; exits with code 1."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Every tunable a run can carry, with published defaults."""

    model: str = "transe"
    dim: int = 256
    rounds: int = 50
    batch_size: int = 1024
    n_negatives: int = 256
    lr: float = 1e-4
    mu_distill: float = 2.0
    mu_soft: float = 0.1
    mu_prox: float = 0.1
    margin: float = 9.0
    eval_interval: int = 5
    patience: int = 3
    local_epochs: int = 3
    fraction: float = 1.0
    forget_proportion: float = 0.01
    interference_epochs: int = 5
    decay_epochs: int = 5
    unlearn_rounds: int = 1
    use_hard: bool = True
    use_soft: bool = True
    corrupt_heads: bool = False
    seed: int = 0
    workers: int = 1


PRESETS = {
    "desk": {"dim": 64, "batch_size": 256, "n_negatives": 64, "rounds": 50},
}

# run-plan keys that live beside the tunables in config files
RUN_KEYS = ("mode", "data", "outdir", "checkpoints")

_MODEL_NAMES = ("transe", "complex", "rotate")


def parse_config_file(path: str | Path) -> dict[str, str]:
    """Flat ``key=value`` lines; blank lines and ``#`` comments ignored."""
    out: dict[str, str] = {}
    errors: list[str] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                errors.append(f"{path}:{lineno}: expected key=value, got {line!r}")
                continue
            out[key.strip()] = value.strip()
    if errors:
        raise UsageError("\n".join(errors))
    return out


def _coerce(kind: type, raw: str) -> object:
    if kind is bool:
        low = raw.lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ValueError(f"expected true/false, got {raw!r}")
    return kind(raw)


def _validate(cfg: ExperimentConfig) -> list[str]:
    errs = []
    if cfg.model not in _MODEL_NAMES:
        errs.append(f"model must be one of {_MODEL_NAMES}, got {cfg.model!r}")
    elif cfg.model in ("complex", "rotate") and cfg.dim % 2:
        errs.append(f"model {cfg.model} needs an even dim, got {cfg.dim}")
    if cfg.dim < 1:
        errs.append(f"dim must be >= 1, got {cfg.dim}")
    if cfg.rounds < 0:
        errs.append(f"rounds must be >= 0, got {cfg.rounds}")
    if cfg.batch_size < 1:
        errs.append(f"batch_size must be >= 1, got {cfg.batch_size}")
    if cfg.n_negatives < 1:
        errs.append(f"n_negatives must be >= 1, got {cfg.n_negatives}")
    if not cfg.lr > 0:
        errs.append(f"lr must be > 0, got {cfg.lr}")
    for name in ("mu_distill", "mu_soft", "mu_prox", "margin"):
        if getattr(cfg, name) < 0:
            errs.append(f"{name} must be >= 0, got {getattr(cfg, name)}")
    if cfg.eval_interval < 1:
        errs.append(f"eval_interval must be >= 1, got {cfg.eval_interval}")
    if cfg.patience < 1:
        errs.append(f"patience must be >= 1, got {cfg.patience}")
    if cfg.local_epochs < 1:
        errs.append(f"local_epochs must be >= 1, got {cfg.local_epochs}")
    if not 0 < cfg.fraction <= 1:
        errs.append(f"fraction must be in (0, 1], got {cfg.fraction}")
    if not 0 < cfg.forget_proportion < 1:
        errs.append(
            f"forget_proportion must be in (0, 1), got {cfg.forget_proportion}"
        )
    if cfg.interference_epochs < 0 or cfg.decay_epochs < 0:
        errs.append("interference_epochs and decay_epochs must be >= 0")
    elif cfg.interference_epochs + cfg.decay_epochs < 1:
        errs.append("interference_epochs + decay_epochs must be >= 1")
    if cfg.unlearn_rounds < 1:
        errs.append(f"unlearn_rounds must be >= 1, got {cfg.unlearn_rounds}")
    if cfg.workers < 1:
        errs.append(f"workers must be >= 1, got {cfg.workers}")
    return errs


def resolve_config(args: argparse.Namespace) -> tuple[ExperimentConfig, dict[str, str]]:
    """Merge defaults < preset < config file < flags; fail with all errors.

    Returns the tunables plus the run-plan keys (mode/paths) resolved the
    same way.
    """
    defaults = ExperimentConfig()
    kinds = {f.name: type(getattr(defaults, f.name)) for f in fields(ExperimentConfig)}
    merged: dict[str, object] = {
        f.name: getattr(defaults, f.name) for f in fields(ExperimentConfig)
    }
    merged["workers"] = int(os.environ.get(WORKERS_ENV, "1") or "1")
    run: dict[str, str] = {}

    errors: list[str] = []
    preset = getattr(args, "preset", None)
    if preset:
        merged.update(PRESETS[preset])

    config_path = getattr(args, "config", None)
    if config_path:
        if not Path(config_path).exists():
            raise UsageError(f"config file not found: {config_path}")
        for key, raw in parse_config_file(config_path).items():
            if key in RUN_KEYS:
                run[key] = raw
                continue
            if key not in merged:
                errors.append(f"unknown config key {key!r}")
                continue
            try:
                merged[key] = _coerce(kinds[key], raw)
            except ValueError as exc:
                errors.append(f"config key {key}: {exc}")

    for key in merged:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    for key in RUN_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            run[key] = str(value)

    cfg = ExperimentConfig(**merged)  # type: ignore[arg-type]
    errors.extend(_validate(cfg))
    if "mode" in run and run["mode"] not in MODES:
        errors.append(f"mode must be one of {MODES}, got {run['mode']!r}")
    if errors:
        raise UsageError("\n".join(f"config error: {e}" for e in errors))
    return cfg, run


def dump_config(path: str | Path, cfg: ExperimentConfig, run: dict[str, str]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for key in sorted(run):
            fh.write(f"{key}={run[key]}\n")
        for f in sorted(fields(ExperimentConfig), key=lambda f: f.name):
            value = getattr(cfg, f.name)
            if isinstance(value, bool):
                value = "true" if value else "false"
            fh.write(f"{f.name}={value}\n")


def to_round_config(cfg: ExperimentConfig) -> RoundConfig:
    return RoundConfig(
        model=ModelKind.parse(cfg.model),
        dim=cfg.dim,
        rounds=cfg.rounds,
        fraction=cfg.fraction,
        local_epochs=cfg.local_epochs,
        batch_size=cfg.batch_size,
        n_negatives=cfg.n_negatives,
        lr=cfg.lr,
        margin=cfg.margin,
        weights=LossWeights(
            mu_distill=cfg.mu_distill, mu_soft=cfg.mu_soft, mu_prox=cfg.mu_prox
        ),
        eval_interval=cfg.eval_interval,
        patience=cfg.patience,
        seed=cfg.seed,
        corrupt_heads=cfg.corrupt_heads,
        workers=cfg.workers,
    )


def to_unlearn_config(cfg: ExperimentConfig) -> UnlearnConfig:
    return UnlearnConfig(
        interference_epochs=cfg.interference_epochs,
        decay_epochs=cfg.decay_epochs,
        rounds=cfg.unlearn_rounds,
        batch_size=cfg.batch_size,
        n_negatives=cfg.n_negatives,
        weights=LossWeights(mu_distill=cfg.mu_distill, mu_soft=cfg.mu_soft),
        margin=cfg.margin,
        seed=cfg.seed,
        use_hard=cfg.use_hard,
        use_soft=cfg.use_soft,
        corrupt_heads=cfg.corrupt_heads,
        workers=cfg.workers,
    )


# ---------------------------------------------------------------------------
# shared plumbing


def _load_shards(data_dir: str | Path, seed: int):
    data = Path(data_dir)
    if not data.is_dir():
        raise UsageError(f"data directory not found: {data}")
    ent_path, rel_path = data / "entities.tsv", data / "relations.tsv"
    if not ent_path.exists() or not rel_path.exists():
        raise UsageError(f"vocabulary dumps missing in {data}")
    vocab = load_vocabulary(ent_path, rel_path)
    files = sorted(data.glob("shard_*.tsv"))
    if not files:
        raise UsageError(f"no shard_*.tsv files in {data}")
    shards = []
    for i, path in enumerate(files):
        triples = read_triples(path, vocab)
        kg = KnowledgeGraph(triples, vocab.n_entities, vocab.n_relations)
        shards.append(localize_shard(i, kg, seed=seed))
    return vocab, shards


_STATE_PARTS = (
    ("local", "local_entities", "opt_local"),
    ("relations", "relations", "opt_relations"),
    ("global", "global_entities", "opt_global"),
)


def _save_states(
    outdir: Path,
    server: ServerState,
    clients: list[ClientState],
    cfg: ExperimentConfig,
    mode: str,
) -> None:
    manifest = {
        "mode": mode,
        "model": cfg.model,
        "dim": str(cfg.dim),
        "round": str(server.round),
        "seed": str(cfg.seed),
        "clients": str(len(clients)),
    }
    save_table(outdir / "server.ckpt", server.entities, manifest=manifest)
    for i, c in enumerate(clients):
        for name, table_attr, opt_attr in _STATE_PARTS:
            save_table(outdir / f"client_{i}.{name}.ckpt", getattr(c, table_attr))
            save_adam(outdir / f"client_{i}.{name}.opt", getattr(c, opt_attr))


def _load_states(
    ckpt_dir: str | Path,
    shards,
    round_config: RoundConfig,
    mode: str,
) -> tuple[ServerState, list[ClientState], dict[str, str]]:
    p = Path(ckpt_dir)
    server_path = p / "server.ckpt"
    if not server_path.exists():
        raise UsageError(f"missing checkpoint: {server_path}")
    server_table = load_table(server_path)
    manifest = load_manifest(server_path)
    server = ServerState(
        entities=server_table, round=int(manifest.get("round", "0"))
    )
    if mode == "centralized":
        base_shards = [merge_client_shards(shards)]
    else:
        base_shards = shards
    clients = []
    for i, shard in enumerate(base_shards):
        state = init_client_state(shard, round_config)
        for name, table_attr, opt_attr in _STATE_PARTS:
            tpath = p / f"client_{i}.{name}.ckpt"
            if not tpath.exists():
                raise UsageError(f"missing checkpoint: {tpath}")
            table = load_table(tpath)
            want = getattr(state, table_attr).rows.shape
            if table.rows.shape != want:
                raise UsageError(
                    f"{tpath}: table shape {table.rows.shape} does not match "
                    f"the {want} expected from the shards and config"
                )
            if table.kind is not round_config.model:
                raise UsageError(
                    f"{tpath}: checkpoint model {table.kind.value} does not "
                    f"match configured {round_config.model.value}"
                )
            setattr(state, table_attr, table)
            opath = p / f"client_{i}.{name}.opt"
            if not opath.exists():
                raise UsageError(f"missing optimizer state: {opath}")
            setattr(state, opt_attr, load_adam(opath))
        clients.append(state)
    return server, clients, manifest


def _metric_table(per_client: dict, variant: str) -> list[str]:
    lines = []
    for cid, m in sorted(per_client.items()):
        lines.append(
            f"{variant:<8} {cid!s:>6} {m.hits1 * 100:8.2f} {m.hits3 * 100:8.2f} "
            f"{m.hits10 * 100:8.2f} {m.mrr * 100:8.2f}"
        )
    m = macro_average(per_client)
    lines.append(
        f"{variant:<8} {'macro':>6} {m.hits1 * 100:8.2f} {m.hits3 * 100:8.2f} "
        f"{m.hits10 * 100:8.2f} {m.mrr * 100:8.2f}"
    )
    return lines


_TABLE_HEADER_LINE = (
    f"{'variant':<8} {'client':>6} {'Hits@1':>8} {'Hits@3':>8} {'Hits@10':>8} {'MRR':>8}"
)


# ---------------------------------------------------------------------------
# commands


def cmd_partition(args: argparse.Namespace) -> int:
    outdir = Path(args.outdir)
    workers = args.workers or int(os.environ.get(WORKERS_ENV, "1") or "1")
    if args.k < 1:
        raise UsageError(f"k must be >= 1, got {args.k}")
    if not Path(args.input).exists():
        raise UsageError(f"input file not found: {args.input}")

    kg, vocab = load_triples(args.input)
    if args.k > kg.n_relations:
        raise UsageError(
            f"k={args.k} exceeds the {kg.n_relations} relations available"
        )
    if args.method == "spectral":
        labels = spectral_partition(build_cooccurrence(kg, workers=workers), args.k, args.seed)
    else:
        labels = random_partition(kg.n_relations, args.k, args.seed)
    shards = distribute(kg, labels, args.k)

    outdir.mkdir(parents=True, exist_ok=True)
    letter = "C" if args.method == "spectral" else "R"
    for i, shard in enumerate(shards):
        write_triples(outdir / f"shard_{letter}{i}.tsv", shard.triples, vocab)
    dump_vocabulary(vocab, outdir / "entities.tsv", outdir / "relations.tsv")

    stats = shard_stats(shards)
    with open(outdir / "stats.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["shard_id", "relations", "entities", "triples", "avg_degree",
             "avg_clustering_coeff"]
        )
        for row in stats.shards:
            writer.writerow([
                row.shard_id, row.n_relations, row.n_entities, row.n_triples,
                f"{row.avg_degree:.6f}", f"{row.avg_clustering:.6f}",
            ])
    for i, shard in enumerate(shards):
        hist = degree_histogram(shard)
        with open(outdir / f"degree_hist_{letter}{i}.csv", "w", encoding="utf-8",
                  newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["degree", "count"])
            for degree, count in enumerate(hist):
                writer.writerow([degree, int(count)])

    with open(outdir / "config.resolved", "w", encoding="utf-8") as fh:
        for key, value in sorted({
            "input": args.input, "k": args.k, "method": args.method,
            "seed": args.seed, "outdir": str(outdir), "workers": workers,
        }.items()):
            fh.write(f"{key}={value}\n")

    print(f"wrote {len(shards)} shards to {outdir}")
    for row in stats.shards:
        print(
            f"  shard {row.shard_id}: {row.n_relations} relations, "
            f"{row.n_entities} entities, {row.n_triples} triples"
        )
    print(f"  entities in more than one shard: {stats.overlap_entities}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    if args.resume and getattr(args, "config", None) is None:
        resumed_cfg = Path(args.outdir or ".") / "config.resolved"
        if resumed_cfg.exists():
            args.config = str(resumed_cfg)
    cfg, run = resolve_config(args)
    mode = run.get("mode", "fedlu")
    if "data" not in run:
        raise UsageError("no data directory given (flag --data or config key data=)")
    if "outdir" not in run:
        raise UsageError("no output directory given (flag --outdir or config key outdir=)")
    outdir = Path(run["outdir"])
    outdir.mkdir(parents=True, exist_ok=True)

    _, shards = _load_shards(run["data"], cfg.seed)
    round_config = to_round_config(cfg)

    init_state = None
    start_round = 0
    if args.resume:
        server, clients, manifest = _load_states(outdir, shards, round_config, mode)
        if manifest.get("mode", mode) != mode:
            raise UsageError(
                f"checkpoint was trained with mode {manifest.get('mode')!r}, "
                f"cannot resume as {mode!r}"
            )
        start_round = server.round
        if start_round >= cfg.rounds:
            raise UsageError(
                f"nothing to resume: checkpoint is at round {start_round} "
                f"of {cfg.rounds}"
            )
        init_state = (server, clients)

    dump_config(outdir / "config.resolved", cfg, {**run, "mode": mode})
    server, clients, history = run_federated_training(
        shards, round_config, mode, init_state=init_state, start_round=start_round
    )

    _save_states(outdir, server, clients, cfg, mode)
    write_history_csv(outdir / "history_local.csv", history, "local")
    write_history_csv(outdir / "history_global.csv", history, "global")

    print(_TABLE_HEADER_LINE)
    for variant in ("local", "global"):
        rows = {
            r.client_id: r.metrics
            for r in history
            if r.split == "test" and r.variant == variant and r.client_id is not None
        }
        if rows:
            print("\n".join(_metric_table(rows, variant)))
    return 0


def cmd_unlearn(args: argparse.Namespace) -> int:
    if getattr(args, "config", None) is None:
        default_cfg = Path(args.checkpoints or ".") / "config.resolved"
        if default_cfg.exists():
            args.config = str(default_cfg)
    cfg, run = resolve_config(args)
    mode = run.get("mode", "fedlu")
    for key, flag in (("data", "--data"), ("checkpoints", "--checkpoints"),
                      ("outdir", "--outdir")):
        if key not in run:
            raise UsageError(f"no {key} given (flag {flag} or config key {key}=)")
    outdir = Path(run["outdir"])
    if outdir.resolve() == Path(run["checkpoints"]).resolve():
        raise UsageError(
            "outdir must differ from the checkpoint directory; unlearning "
            "writes new checkpoints"
        )
    outdir.mkdir(parents=True, exist_ok=True)

    vocab, shards = _load_shards(run["data"], cfg.seed)
    round_config = to_round_config(cfg)
    server, clients, _ = _load_states(run["checkpoints"], shards, round_config, mode)
    dump_config(outdir / "config.resolved", cfg, {**run, "mode": mode})

    base_shards = [c.shard for c in clients]
    spec = make_forget_spec(base_shards, cfg.forget_proportion, cfg.seed)
    for p in spec.client_positions:
        shard = clients[p].shard
        entry = spec.entries[p]
        write_triples(outdir / f"forget_{p}.tsv", shard.to_global(entry.forget), vocab)
        write_triples(outdir / f"retain_{p}.tsv", shard.to_global(entry.retain), vocab)

    raw_forget = evaluate_forget(clients, spec)
    raw_test = evaluate_clients(clients, "test", "local")

    retrain_mode = "independent" if mode == "centralized" else mode
    _, retrained_clients, _ = retrain_baseline(
        base_shards, spec, round_config, retrain_mode
    )
    retrained_forget = evaluate_forget(retrained_clients, spec)
    retrained_test = evaluate_clients(retrained_clients, "test", "local")

    run_federated_unlearning(server, clients, spec, to_unlearn_config(cfg))
    unlearned_forget = evaluate_forget(clients, spec)
    unlearned_test = evaluate_clients(clients, "test", "local")

    _save_states(outdir, server, clients, cfg, mode)

    phases = {
        "raw": (raw_forget, raw_test),
        "retrained": (retrained_forget, retrained_test),
        "unlearned": (unlearned_forget, unlearned_test),
    }
    metric_names = ("hits1", "hits3", "hits10", "mrr")
    with open(outdir / "report.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["client_id", "metric",
             "raw_forget", "raw_test",
             "retrained_forget", "retrained_test",
             "unlearned_forget", "unlearned_test"]
        )
        ids = [clients[p].client_id for p in spec.client_positions] + ["macro"]
        for cid in ids:
            per_phase = {}
            for phase, (forget, test) in phases.items():
                if cid == "macro":
                    per_phase[phase] = (macro_average(forget), macro_average(test))
                else:
                    per_phase[phase] = (forget[cid], test[cid])
            for name in metric_names:
                writer.writerow(
                    [cid, name]
                    + [
                        f"{getattr(m, name) * 100:.4f}"
                        for phase in ("raw", "retrained", "unlearned")
                        for m in per_phase[phase]
                    ]
                )

    print("MRR x100 (forget / test)")
    for cid in [clients[p].client_id for p in spec.client_positions] + ["macro"]:
        cells = []
        for phase, (forget, test) in phases.items():
            fm = macro_average(forget) if cid == "macro" else forget[cid]
            tm = macro_average(test) if cid == "macro" else test[cid]
            cells.append(f"{phase} {fm.mrr * 100:6.2f} / {tm.mrr * 100:6.2f}")
        print(f"  client {cid}: " + "   ".join(cells))
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    if getattr(args, "config", None) is None:
        default_cfg = Path(args.checkpoints or ".") / "config.resolved"
        if default_cfg.exists():
            args.config = str(default_cfg)
    cfg, run = resolve_config(args)
    mode = run.get("mode", "fedlu")
    if "data" not in run:
        raise UsageError("no data directory given (flag --data or config key data=)")
    if "checkpoints" not in run:
        raise UsageError("no checkpoint directory given (flag --checkpoints)")
    if args.variant == "global" and mode in ("independent", "centralized"):
        raise UsageError(f"variant 'global' is undefined for mode {mode!r}")

    _, shards = _load_shards(run["data"], cfg.seed)
    round_config = to_round_config(cfg)
    server, clients, _ = _load_states(run["checkpoints"], shards, round_config, mode)

    if mode == "centralized":
        # the center holds one merged table; report it per merged split
        per_client = evaluate_clients(clients, args.split, "local")
    elif args.variant == "global":
        mapping = make_mappings([c.shard for c in clients])
        per_client = evaluate_clients(
            clients, args.split, "global", server=server, mapping=mapping
        )
    else:
        per_client = evaluate_clients(clients, args.split, "local")

    print(_TABLE_HEADER_LINE)
    print("\n".join(_metric_table(per_client, args.variant)))
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["client_id", "split", "variant", "hits1", "hits3", "hits10", "mrr"]
            )
            rows = sorted(per_client.items())
            rows.append(("macro", macro_average(per_client)))
            for cid, m in rows:
                writer.writerow([
                    cid, args.split, args.variant,
                    f"{m.hits1 * 100:.4f}", f"{m.hits3 * 100:.4f}",
                    f"{m.hits10 * 100:.4f}", f"{m.mrr * 100:.4f}",
                ])
    return 0


def _read_labels(path: str | Path) -> dict[int, str]:
    labels: dict[int, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line:
                label, _, idx = line.rpartition("\t")
                labels[int(idx)] = label
    return labels


def cmd_export(args: argparse.Namespace) -> int:
    if not Path(args.checkpoint).exists():
        raise UsageError(f"checkpoint not found: {args.checkpoint}")
    table = load_table(args.checkpoint)
    labels = _read_labels(args.vocab) if args.vocab else {}
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["id", "label"] + [f"v{j}" for j in range(table.width)]
        )
        for i in range(table.count):
            writer.writerow(
                [i, labels.get(i, str(i))]
                + [format(x, ".17g") for x in table.rows[i]]
            )
    print(f"wrote {table.count} rows to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_config_flags(p: argparse.ArgumentParser, unlearn: bool = False) -> None:
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--preset", choices=sorted(PRESETS), help="named config preset")
    p.add_argument("--model", choices=_MODEL_NAMES)
    p.add_argument("--dim", type=int)
    p.add_argument("--rounds", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--negatives", dest="n_negatives", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--mu-distill", dest="mu_distill", type=float)
    p.add_argument("--mu-soft", dest="mu_soft", type=float)
    p.add_argument("--mu-prox", dest="mu_prox", type=float)
    p.add_argument("--margin", type=float)
    p.add_argument("--eval-interval", dest="eval_interval", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--local-epochs", dest="local_epochs", type=int)
    p.add_argument("--fraction", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument(
        "--corrupt-heads", dest="corrupt_heads", action="store_const", const=True
    )
    if unlearn:
        p.add_argument("--forget-proportion", dest="forget_proportion", type=float)
        p.add_argument(
            "--interference-epochs", dest="interference_epochs", type=int
        )
        p.add_argument("--decay-epochs", dest="decay_epochs", type=int)
        p.add_argument("--unlearn-rounds", dest="unlearn_rounds", type=int)
        p.add_argument("--no-hard", dest="use_hard", action="store_const", const=False)
        p.add_argument("--no-soft", dest="use_soft", action="store_const", const=False)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedkge",
        description="Federated knowledge-graph embedding: partition, train, "
        "unlearn, evaluate, export.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("partition", help="cluster relations and write shards")
    p.add_argument("input", help="triples TSV (head<TAB>relation<TAB>tail)")
    p.add_argument("--k", type=int, required=True, help="number of shards")
    p.add_argument("--method", choices=("spectral", "random"), default="spectral")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--outdir", required=True)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("train", help="run federated training")
    p.add_argument("--data", help="directory produced by `partition`")
    p.add_argument("--outdir")
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--resume", action="store_true",
                   help="continue from the checkpoints in --outdir")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("unlearn", help="forget sampled triples from a trained run")
    p.add_argument("--data")
    p.add_argument("--checkpoints", help="directory with the trained checkpoints")
    p.add_argument("--outdir")
    p.add_argument("--mode", choices=MODES)
    _add_config_flags(p, unlearn=True)
    p.set_defaults(func=cmd_unlearn)

    p = sub.add_parser("evaluate", help="score checkpoints on a split")
    p.add_argument("--data")
    p.add_argument("--checkpoints")
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--split", choices=("valid", "test"), default="test")
    p.add_argument("--variant", choices=("local", "global"), default="local")
    p.add_argument("--out", help="optional metrics CSV")
    _add_config_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("export", help="dump an embedding table to CSV")
    p.add_argument("checkpoint")
    p.add_argument("out")
    p.add_argument("--vocab", help="label dump (label<TAB>id) for the label column")
    p.set_defaults(func=cmd_export)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001  surfaced as runtime failure
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
