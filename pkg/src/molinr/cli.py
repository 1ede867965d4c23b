"""Command-line entry point: gen-data, train, sample, eval.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .checkpoint import Checkpoint
from .config import ConfigError, load_config
from .emtrain import CSV_HEADER, NumericalError, draw_topologies, sample, train
from .metrics import compute_metrics, graph_stats_distance, training_hashes
from .molgraph import (
    QM9_ALPHABET,
    ZINC_ALPHABET,
    AtomAlphabet,
    MoleculeFormatError,
    generate_synthetic_dataset,
    is_valid_molecule,
    iter_molecule_lines,
    parse_molecule,
    read_molecule_file,
    serialize_molecule,
    write_molecule_file,
)
from .spectral import EigenConvergenceError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
INVALID_MARKER = "#invalid"

log = logging.getLogger("molinr")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _alphabet(text: str) -> AtomAlphabet:
    named = {"qm9": QM9_ALPHABET, "zinc": ZINC_ALPHABET}
    if text.lower() in named:
        return named[text.lower()]
    if ":" in text:
        return AtomAlphabet.parse(text)
    return AtomAlphabet.from_symbols(text.split(","))


def read_generated_file(path) -> tuple[list, AtomAlphabet]:
    """Read sampler output. Lines marked ``#invalid`` count as invalid molecules (``None``)."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    alphabet = QM9_ALPHABET
    for line in lines:
        if line.startswith("#alphabet"):
            alphabet = AtomAlphabet.parse(line[len("#alphabet"):].strip())
            break
    out: list = [None] * sum(1 for line in lines if line.startswith(INVALID_MARKER))
    out += [parse_molecule(text, alphabet, lineno) for lineno, text in iter_molecule_lines(lines)]
    return out, alphabet


def write_generated_file(path, mols, alphabet: AtomAlphabet) -> int:
    """Write sampler output; invalid decodes become ``#invalid`` comment lines. Returns the valid count."""
    n_valid = 0
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"#alphabet {alphabet.format()}\n")
        for g in mols:
            if is_valid_molecule(g):
                n_valid += 1
                fh.write(serialize_molecule(g) + "\n")
            else:
                fh.write(f"{INVALID_MARKER} {serialize_molecule(g)}\n")
    return n_valid


def cmd_gen_data(args) -> int:
    alphabet = _alphabet(args.alphabet)
    mols = generate_synthetic_dataset(args.count, args.max_atoms, alphabet, args.seed, variants=args.variants)
    write_molecule_file(args.out, mols, alphabet)
    log.info("wrote %d molecules to %s", len(mols), args.out)
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    data, _ = read_molecule_file(args.data, cfg.alphabet)
    with open(args.log, "w", encoding="utf-8") as fh:
        fh.write(CSV_HEADER + "\n")

        def on_epoch(rec):
            fh.write(rec.csv_row() + "\n")
            fh.flush()

        ckpt = train(data, cfg, on_epoch=on_epoch)
    ckpt.save(args.out_checkpoint)
    if ckpt.history:
        last = ckpt.history[-1]
        log.info("trained %d epochs, final L_denoise=%.4g", last.epoch, last.L_denoise)
    return EXIT_OK


def cmd_sample(args) -> int:
    ckpt = Checkpoint.load(args.checkpoint)
    alphabet = ckpt.config.alphabet
    pool, _ = read_molecule_file(args.topologies, alphabet)
    if not pool:
        raise ValueError("topology file contains no molecules")
    mols = sample(ckpt, draw_topologies(pool, args.count, args.seed), args.seed)
    n_valid = write_generated_file(args.out, mols, alphabet)
    log.info("wrote %d samples (%d valid) to %s", len(mols), n_valid, args.out)
    return EXIT_OK


def cmd_eval(args) -> int:
    generated, alphabet = read_generated_file(args.generated)
    train_mols, _ = read_molecule_file(args.train_data, alphabet)
    metrics = compute_metrics(generated, training_hashes(train_mols))
    valid = [g for g in generated if g is not None and is_valid_molecule(g)]
    if valid and train_mols:
        stats = graph_stats_distance(valid, train_mols).to_dict()
    else:
        # Nothing valid to compare: report maximal distance.
        stats = dict.fromkeys(["atom_tv", "bond_tv", "degree_tv", "nodes_tv", "mean"], 1.0)
    doc = metrics.to_dict()
    doc["stats_distance"] = stats
    text = json.dumps(doc, indent=2)
    if args.out == "-":
        print(text)
    else:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="molinr", description="Functional diffusion over molecular graphs.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-data", help="write a synthetic molecule dataset")
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--max-atoms", type=int, required=True)
    g.add_argument("--alphabet", default="qm9", help="qm9, zinc, or a list like C,N,O or C:4,N:3")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--variants", type=int, default=1, help="molecules per shared skeleton")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train the denoiser and latent networks")
    t.add_argument("--config", required=True)
    t.add_argument("--data", required=True)
    t.add_argument("--out-checkpoint", required=True)
    t.add_argument("--log", required=True, help="per-epoch CSV loss log")
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("sample", help="generate molecules from a checkpoint")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--topologies", required=True, help="molecule file to draw topologies from")
    s.add_argument("--count", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sample)

    e = sub.add_parser("eval", help="compute generation metrics as JSON")
    e.add_argument("--generated", required=True)
    e.add_argument("--train-data", required=True)
    e.add_argument("--out", default="-")
    e.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as err:
        print(err, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (EigenConvergenceError, NumericalError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except MoleculeFormatError as err:
        print(f"data error: {err}", file=sys.stderr)
        return EXIT_DATA
    except (ConfigError, ValueError, OSError, KeyError, json.JSONDecodeError) as err:
        print(f"data error: {err}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
