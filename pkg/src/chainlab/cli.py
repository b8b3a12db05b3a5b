"""Command-line surface: `chainlab generate | stats | eval`.

Exit codes: 0 ok, 2 invalid config/usage, 3 I/O failure, 4 data mismatch.
Seed precedence: --seed flag > COT_ICL_SEED env var > config file.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import dataset_io
from .dag import DagConfig
from .dataset_io import DatasetIOError, config_from_dict, config_to_dict
from .embedding import CileFormatError, read_cile, sample_data_embedding
from .metrics import (
    attention_precision_report,
    compute_accuracy,
    subspace_similarity,
)
from .processor import Activation
from .sequence import (
    DatasetConfig,
    Regime,
    build_shared_state,
    generate_sequence,
)
from .stats import ccdf_table, fit_tail, token_coverage, token_histogram

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_MISMATCH = 4

SEED_ENV_VAR = "COT_ICL_SEED"

CONFIG_KEYS = {
    "vocab_size", "dim", "n_inputs", "n_parents", "chain_len", "n_examples",
    "mlp_depth", "activation", "leaky_slope", "n_sequences", "cot", "regime",
    "pool_size", "master_seed", "data_std", "split",
}
REQUIRED_KEYS = {
    "vocab_size", "dim", "n_inputs", "n_parents", "chain_len", "n_examples",
    "mlp_depth", "activation", "n_sequences", "cot", "master_seed",
}


class ConfigError(ValueError):
    pass


def load_run_config(path, seed_override=None) -> DatasetConfig:
    try:
        with open(path, encoding="utf-8") as f:
            raw = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(raw) - CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    missing = REQUIRED_KEYS - set(raw)
    if missing:
        raise ConfigError(f"missing config keys: {sorted(missing)}")

    raw.setdefault("regime", Regime.INFINITE_PROCESSORS.value)
    raw.setdefault("pool_size", None)
    raw.setdefault("data_std", 1.0)
    if seed_override is not None:
        raw["master_seed"] = seed_override
    elif SEED_ENV_VAR in os.environ:
        raw["master_seed"] = int(os.environ[SEED_ENV_VAR])
    try:
        return config_from_dict(raw)
    except (ValueError, KeyError) as e:
        raise ConfigError(str(e)) from e


def _worker_generate(config_dict: dict, lo: int, hi: int) -> list[str]:
    config = config_from_dict(config_dict)
    embedding = sample_data_embedding(
        config.vocab_size, config.dim, config.stream("embed"), config.data_std
    )
    shared = build_shared_state(config)
    return [
        dataset_io.record_to_json(
            generate_sequence(config, i, embedding, shared)
        )
        for i in range(lo, hi)
    ]


def run_generate(config: DatasetConfig, out_dir, workers: int) -> None:
    embedding = sample_data_embedding(
        config.vocab_size, config.dim, config.stream("embed"), config.data_std
    )
    os.makedirs(out_dir, exist_ok=True)

    t = config.n_sequences
    if workers <= 1:
        shared = build_shared_state(config)
        records = (generate_sequence(config, i, embedding, shared)
                   for i in range(t))
        dataset_io.write_dataset(out_dir, config, embedding, records)
        return

    config_dict = config_to_dict(config)
    chunk = max(1, -(-t // (workers * 4)))
    bounds = [(lo, min(lo + chunk, t)) for lo in range(0, t, chunk)]
    emb_path = os.path.join(out_dir, dataset_io.EMBEDDING_NAME)
    from .embedding import write_cile_matrix

    write_cile_matrix(emb_path, embedding.values)
    with ProcessPoolExecutor(max_workers=workers) as pool, \
            open(os.path.join(out_dir, dataset_io.DATASET_NAME), "w",
                 encoding="utf-8") as f:
        for lines in pool.map(
            _worker_generate, [config_dict] * len(bounds),
            [b[0] for b in bounds], [b[1] for b in bounds],
        ):
            for line in lines:
                f.write(line)
                f.write("\n")

    from datetime import datetime, timezone

    manifest = {
        "format_version": dataset_io.FORMAT_VERSION,
        "config": config_dict,
        "embedding_file": dataset_io.EMBEDDING_NAME,
        "embedding_sha256": dataset_io.sha256_file(emb_path),
        "created": datetime.now(timezone.utc).isoformat(),
        "n_records": t,
    }
    with open(os.path.join(out_dir, dataset_io.MANIFEST_NAME), "w",
              encoding="utf-8") as f:
        json.dump(manifest, f, indent=2)
        f.write("\n")


def cmd_generate(args) -> int:
    try:
        config = load_run_config(args.config, args.seed)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        run_generate(config, args.out, args.workers)
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    print(json.dumps({"dataset": args.out, "n_records": config.n_sequences}))
    return EXIT_OK


def cmd_stats(args) -> int:
    try:
        manifest, config, _, records = dataset_io.read_dataset(args.dataset)
        hist = token_histogram(records, config.vocab_size)
    except (DatasetIOError, CileFormatError, OSError, ValueError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO

    report = {
        "n_records": manifest["n_records"],
        "token_coverage": token_coverage(hist),
        "total_input_tokens": hist.total_inputs,
        "total_chain_tokens": hist.total_chains,
        "unique_chain_tokens": int((hist.chain_counts > 0).sum()),
        "unique_tokens": int(((hist.input_counts + hist.chain_counts) > 0).sum()),
    }

    tail_report = None
    if args.fit_tail:
        freqs = hist.chain_counts[hist.chain_counts > 0]
        tail_report = fit_tail(freqs)
        report["tail_fit"] = tail_report.to_dict()

    out_dir = args.out or args.dataset
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "stats.json"), "w", encoding="utf-8") as f:
        json.dump(report, f, indent=2)
        f.write("\n")
    _write_histogram_csv(os.path.join(out_dir, "token_histogram.csv"), hist)
    if tail_report is not None:
        rows = ccdf_table(hist.chain_counts[hist.chain_counts > 0], tail_report)
        with open(os.path.join(out_dir, "ccdf.csv"), "w", newline="",
                  encoding="utf-8") as f:
            writer = csv.DictWriter(
                f, fieldnames=["value", "ccdf_empirical", "ccdf_powerlaw",
                               "ccdf_lognormal"])
            writer.writeheader()
            writer.writerows(rows)
    if args.figures:
        _render_stats_figures(out_dir, hist, tail_report)

    print(json.dumps(report))
    return EXIT_OK


def _write_histogram_csv(path, hist) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["token", "input_count", "chain_count"])
        for tok, (ic, cc) in enumerate(zip(hist.input_counts, hist.chain_counts)):
            writer.writerow([tok, int(ic), int(cc)])


def _render_stats_figures(out_dir, hist, tail_report) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(1, 2, figsize=(11, 4))
    order = np.sort(hist.chain_counts[hist.chain_counts > 0])[::-1]
    axes[0].bar(range(len(hist.input_counts)), hist.input_counts, width=1.0)
    axes[0].set_title("input tokens")
    axes[0].set_xlabel("token id")
    axes[1].bar(range(len(order)), order, width=1.0, color="tab:orange")
    axes[1].set_title("chain tokens (sorted)")
    axes[1].set_xlabel("rank")
    fig.tight_layout()
    fig.savefig(os.path.join(out_dir, "token_histogram.png"), dpi=120)
    plt.close(fig)

    if tail_report is not None and np.isfinite(tail_report.alpha):
        rows = ccdf_table(hist.chain_counts[hist.chain_counts > 0], tail_report)
        xs = [r["value"] for r in rows]
        fig, ax = plt.subplots(figsize=(5, 4))
        ax.loglog(xs, [r["ccdf_empirical"] for r in rows], "o", ms=4,
                  label="empirical")
        ax.loglog(xs, [r["ccdf_powerlaw"] for r in rows], "--",
                  label=f"power law (alpha={tail_report.alpha:.2f})")
        ax.loglog(xs, [r["ccdf_lognormal"] for r in rows], "-",
                  label="lognormal")
        ax.set_xlabel("chain-token frequency")
        ax.set_ylabel("CCDF")
        ax.legend()
        fig.tight_layout()
        fig.savefig(os.path.join(out_dir, "ccdf.png"), dpi=120)
        plt.close(fig)


def cmd_eval(args) -> int:
    try:
        manifest, config, embedding, records_iter = dataset_io.read_dataset(
            args.dataset)
        records = list(records_iter)
    except (DatasetIOError, CileFormatError, OSError, ValueError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO

    try:
        bundle = dataset_io.read_eval_bundle(
            args.predictions, config,
            model_embedding_path=args.model_embedding,
            attention_path=args.attention,
        )
        accuracy = compute_accuracy(bundle, records)
    except (DatasetIOError, CileFormatError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_MISMATCH
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO

    report = {"accuracy": accuracy.to_dict()}

    if args.sim:
        try:
            e_data = read_cile(args.sim[0]).astype(np.float64)
            e_model = read_cile(args.sim[1]).astype(np.float64)
        except (CileFormatError, OSError) as e:
            print(f"error: {e}", file=sys.stderr)
            return EXIT_IO
        try:
            sim = subspace_similarity(e_data, e_model, config.dim)
        except ValueError as e:
            print(f"error: {e}", file=sys.stderr)
            return EXIT_MISMATCH
        report["sim"] = sim
        report["sim_normalized"] = sim * np.sqrt(config.dim)

    if args.attn_precision:
        try:
            attn = attention_precision_report(
                bundle, records, config.dag.n_inputs, config.dag.chain_len,
                config.dag.n_parents,
            )
        except ValueError as e:
            print(f"error: {e}", file=sys.stderr)
            return EXIT_MISMATCH
        report["attention"] = attn.to_dict()

    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "eval.json"), "w",
                  encoding="utf-8") as f:
            json.dump(report, f, indent=2)
            f.write("\n")
        if args.figures and bundle.attention is not None:
            _render_attention_figure(args.out, bundle)

    print(json.dumps(report))
    return EXIT_OK


def _render_attention_figure(out_dir, bundle) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    from .metrics import mean_attention

    avg = mean_attention(bundle.attention[0, -1])
    fig, ax = plt.subplots(figsize=(5, 4))
    im = ax.imshow(avg, cmap="viridis")
    fig.colorbar(im, ax=ax)
    ax.set_title("head-averaged attention (sequence 0, last layer)")
    fig.tight_layout()
    fig.savefig(os.path.join(out_dir, "attention_map.png"), dpi=120)
    plt.close(fig)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chainlab",
        description="Synthetic chained-token ICL dataset generator and evaluator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate a dataset from a config file")
    g.add_argument("config", help="JSON config path")
    g.add_argument("--out", required=True, help="output directory")
    g.add_argument("--workers", type=int, default=1)
    g.add_argument("--seed", type=int, default=None,
                   help="override the config master seed")
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("stats", help="token statistics for a dataset")
    s.add_argument("dataset", help="dataset directory")
    s.add_argument("--fit-tail", action="store_true")
    s.add_argument("--out", default=None, help="report directory (default: dataset)")
    s.add_argument("--figures", action="store_true",
                   help="also render PNG figures next to the CSV output")
    s.set_defaults(func=cmd_stats)

    e = sub.add_parser("eval", help="score model predictions against a dataset")
    e.add_argument("dataset", help="dataset directory")
    e.add_argument("predictions", help="predictions JSONL")
    e.add_argument("--model-embedding", default=None, help="E_TF CILE file")
    e.add_argument("--attention", default=None, help="attention CILE tensor")
    e.add_argument("--sim", nargs=2, metavar=("E_DATA", "E_MODEL"), default=None,
                   help="compute subspace similarity between two CILE matrices")
    e.add_argument("--attn-precision", action="store_true")
    e.add_argument("--out", default=None, help="report directory")
    e.add_argument("--figures", action="store_true")
    e.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on usage errors, matching our config exit code
        return int(e.code) if e.code else EXIT_OK
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
