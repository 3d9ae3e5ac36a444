"""``msreinflect`` command-line entry point.

Subcommands: build-data, train, predict, evaluate, summarize, curve,
heatmap, gradcheck. Settings come from an optional flat ``key = value``
file (``--config``) overridden by flags; the effective settings are echoed
to stderr as ``# key = value`` lines.

Exit codes: 0 success, 1 usage or configuration error, 2 I/O or input-data
error, 3 gradient check above threshold.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

from . import __version__
from .datamodel import (
    Instance,
    MorphTag,
    TagSchema,
    build_vocab,
    format_instance,
    read_instances,
    write_instances,
)
from .errors import (
    CheckpointError,
    ConflictError,
    EmptySplit,
    InstanceMismatch,
    LengthMismatch,
    ParseError,
    ReinflectionError,
    ShapeMismatch,
    UnknownLemma,
)

logger = logging.getLogger("msreinflect")

GRADCHECK_THRESHOLD = 1e-4

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_THRESHOLD = 0, 1, 2, 3

_IO_ERRORS = (
    OSError,
    ParseError,
    CheckpointError,
    ConflictError,
    UnknownLemma,
    EmptySplit,
    LengthMismatch,
    InstanceMismatch,
    ShapeMismatch,
)


class UsageError(Exception):
    pass


# ---- settings -------------------------------------------------------------


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("true", "1", "yes", "on"):
        return True
    if t in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _optional_float(text):
    if text is None or str(text).strip().lower() in ("none", ""):
        return None
    return float(text)


def _optional_int(text):
    if text is None or str(text).strip().lower() in ("none", ""):
        return None
    return int(text)


def _arch(text) -> str:
    t = str(text).strip()
    names = {"multi": "multi", "multi_encoder": "multi", "concat": "concat", "concat_single_encoder": "concat"}
    if t not in names:
        raise ValueError(f"arch must be multi or concat, got {text!r}")
    return names[t]


@dataclass(frozen=True)
class Setting:
    parse: Callable[[Any], Any]
    default: Any
    help: str


SETTINGS: dict[str, Setting] = {
    "seed": Setting(int, 0, "master random seed"),
    "k_extra": Setting(int, 3, "extra sources sampled per base pair"),
    "exclude_target_slot": Setting(_bool, True, "never sample the target slot as a source"),
    "k": Setting(int, 4, "use at most the first K sources of each instance"),
    "arch": Setting(_arch, "multi", "multi (one encoder per source) or concat (single encoder)"),
    "share_params": Setting(_bool, True, "share encoder weights across sources"),
    "embed_dim": Setting(int, 300, "symbol embedding size"),
    "hidden_dim": Setting(int, 100, "GRU state size"),
    "batch_size": Setting(int, 20, "minibatch size"),
    "max_epochs": Setting(int, 90, "epoch budget"),
    "patience": Setting(int, 20, "early-stopping patience in epochs"),
    "rho": Setting(float, 0.95, "Adadelta decay"),
    "eps": Setting(float, 1e-6, "Adadelta epsilon"),
    "early_stopping": Setting(_bool, True, "stop after PATIENCE epochs without dev improvement"),
    "clip_norm": Setting(_optional_float, None, "global gradient-norm clip (none = off)"),
    "beam": Setting(int, 1, "beam width at prediction time"),
    "max_output_len": Setting(int, 40, "decoder steps including the end symbol"),
    "levels": Setting(int, 3, "number of halvings for learning curves"),
    "threads": Setting(_optional_int, None, "cap on BLAS worker threads"),
    "tag_schema": Setting(str, "delimiter", "delimiter, delimiter:<sep> or camel"),
}

ALIASES = {"max_k": "k", "share_encoder_params": "share_params", "beam_width": "beam"}


def read_config_file(path) -> dict[str, str]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            key, value = (x.strip() for x in line.split("=", 1))
            key = ALIASES.get(key.replace("-", "_"), key.replace("-", "_"))
            if key not in SETTINGS:
                raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
            out[key] = value
    return out


class RunConfig(dict):
    """Effective settings; ``explicit`` holds keys set by file or flag."""

    def __init__(self, values, explicit):
        super().__init__(values)
        self.explicit = frozenset(explicit)

    def echo(self, stream=None) -> None:
        stream = stream or sys.stderr
        for key in sorted(self):
            stream.write(f"# {key} = {_show(self[key])}\n")

    def model_config(self):
        from .model import ModelConfig

        return ModelConfig(
            embed_dim=self["embed_dim"],
            hidden_dim=self["hidden_dim"],
            max_k=self["k"],
            share_encoder_params=self["share_params"],
            arch="multi_encoder" if self["arch"] == "multi" else "concat_single_encoder",
            beam_width=self["beam"],
            max_output_len=self["max_output_len"],
        )

    def train_config(self):
        from .training import TrainConfig

        return TrainConfig(
            batch_size=self["batch_size"],
            max_epochs=self["max_epochs"],
            patience=min(self["patience"], self["max_epochs"]),
            rho=self["rho"],
            eps=self["eps"],
            seed=self["seed"],
            early_stopping=self["early_stopping"],
            clip_norm=self["clip_norm"],
        )

    def sampler_config(self):
        from .dataset import SamplerConfig

        return SamplerConfig(self["k_extra"], self["seed"], self["exclude_target_slot"])

    @property
    def schema(self) -> TagSchema:
        return TagSchema.parse(self["tag_schema"])


def _show(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def resolve_config(args: argparse.Namespace) -> RunConfig:
    raw = read_config_file(args.config) if args.config else {}
    explicit = set(raw)
    for key in SETTINGS:
        flag = getattr(args, key, None)
        if flag is not None:
            raw[key] = flag
            explicit.add(key)
    values = {}
    for key, setting in SETTINGS.items():
        try:
            values[key] = setting.parse(raw[key]) if key in raw else setting.default
        except ValueError as exc:
            raise UsageError(f"{key}: {exc}") from exc
    cfg = RunConfig(values, explicit)
    try:
        cfg.model_config(), cfg.train_config(), cfg.sampler_config(), cfg.schema
    except (ValueError, ReinflectionError) as exc:
        raise UsageError(str(exc)) from exc
    return cfg


# ---- argument parsing -----------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _settings_parent() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("settings (override --config)")
    g.add_argument("--config", metavar="PATH", help="flat key = value settings file")
    for key, s in SETTINGS.items():
        kw: dict[str, Any] = {"dest": key, "default": None, "help": s.help}
        if key == "arch":
            kw["choices"] = ["multi", "concat"]
        elif key == "share_params":
            kw["choices"] = ["true", "false"]
        g.add_argument("--" + key.replace("_", "-"), **kw)
    return p


def build_parser() -> argparse.ArgumentParser:
    parent = _settings_parent()
    parser = _Parser(prog="msreinflect", description="Multi-source morphological reinflection.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("build-data", parents=[parent], help="make multi-source instance files")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--paradigms", metavar="TSV", help="lemma<TAB>tag<TAB>form rows")
    src.add_argument("--synthetic", metavar="SPEC", help="synthetic language spec file, or 'benchmark'")
    p.add_argument("--base", metavar="TSV", help="single-source pairs (needed with --paradigms)")
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--name", default="instances", help="output stem for --paradigms mode")
    p.set_defaults(func=cmd_build_data)

    p = sub.add_parser("train", parents=[parent], help="train a model")
    p.add_argument("--train", required=True, metavar="TSV")
    p.add_argument("--dev", required=True, metavar="TSV")
    p.add_argument("--out", required=True, metavar="CHECKPOINT")
    p.add_argument("--history", metavar="TSV", help="default: CHECKPOINT.history.tsv")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", parents=[parent], help="1-best predictions")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True, metavar="TSV")
    p.add_argument("--out", required=True, metavar="TSV")
    p.add_argument("--trace", metavar="DIR", help="write one attention CSV per instance")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", parents=[parent], help="exact-match accuracy")
    p.add_argument("--predictions", required=True, metavar="TSV")
    p.add_argument("--gold", required=True, metavar="TSV")
    p.add_argument("--out", metavar="TSV", help="report file (default: stdout)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("summarize", parents=[parent], help="one accuracy row from several reports")
    p.add_argument("reports", nargs="+", metavar="LABEL=REPORT")
    p.add_argument("--row", default="accuracy", help="row label, e.g. a language name")
    p.add_argument("--out", metavar="TSV", help="default: stdout")
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("curve", parents=[parent], help="learning curve over nested halvings")
    p.add_argument("--train", required=True, metavar="TSV")
    p.add_argument("--dev", required=True, metavar="TSV")
    p.add_argument("--test", required=True, metavar="TSV")
    p.add_argument("--out", metavar="TSV", help="default: stdout")
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("heatmap", parents=[parent], help="attention heatmap for one instance")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True, metavar="TSV")
    p.add_argument("--index", type=int, default=1, help="1-based line number in --input")
    p.add_argument("--csv", required=True, metavar="PATH")
    p.add_argument("--svg", metavar="PATH")
    p.set_defaults(func=cmd_heatmap)

    p = sub.add_parser("gradcheck", parents=[parent], help="finite-difference gradient check")
    p.add_argument("--dims", choices=["small"], default="small")
    p.set_defaults(func=cmd_gradcheck)
    return parser


# ---- commands -------------------------------------------------------------


def _write_text(path, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def cmd_build_data(args, cfg: RunConfig) -> int:
    from .dataset import load_paradigms, read_base_pairs, sample_multisource, source_histogram, write_paradigms

    os.makedirs(args.out, exist_ok=True)
    schema = cfg.schema
    if args.paradigms:
        if not args.base:
            raise UsageError("--paradigms needs --base")
        table = load_paradigms(args.paradigms, schema)
        base = read_base_pairs(args.base, table, schema)
        insts = sample_multisource(table, base, cfg.sampler_config())
        write_instances(os.path.join(args.out, f"{args.name}.tsv"), insts, schema)
        hist = source_histogram(insts)
        hist.write(os.path.join(args.out, f"{args.name}.histogram.tsv"))
        sys.stdout.write(f"{args.name}\t{len(insts)} instances\n" + hist.to_tsv())
        return EXIT_OK

    from .synthetic import BENCHMARK_SPEC, generate_synthetic_language, load_spec, parse_spec_text

    spec = parse_spec_text(BENCHMARK_SPEC) if args.synthetic == "benchmark" else load_spec(args.synthetic)
    seed = cfg["seed"] if "seed" in cfg.explicit else spec.seed
    data = generate_synthetic_language(spec, seed=seed, schema=schema)
    write_paradigms(os.path.join(args.out, "paradigms.tsv"), data.paradigms, schema)
    for split, insts in data.splits.items():
        write_instances(os.path.join(args.out, f"{split}.tsv"), insts, schema)
        source_histogram(insts).write(os.path.join(args.out, f"{split}.histogram.tsv"))
        _write_text(
            os.path.join(args.out, f"{split}.configs.tsv"),
            "".join(f"{i}\t{c}\n" for i, c in enumerate(data.configurations[split], 1)),
        )
        sys.stdout.write(f"{split}\t{len(insts)} instances\n")
    return EXIT_OK


def cmd_train(args, cfg: RunConfig) -> int:
    from .model import save_checkpoint
    from .training import train

    schema = cfg.schema
    train_set = read_instances(args.train, schema)
    dev_set = read_instances(args.dev, schema)
    params, history = train(train_set, dev_set, cfg.model_config(), cfg.train_config(), vocab=build_vocab(train_set))
    provenance = {k: _show(v) for k, v in sorted(cfg.items()) if k != "threads"}
    save_checkpoint(args.out, params, extra={"run_config": provenance, "best_epoch": history.best_epoch})
    history.write(args.history or args.out + ".history.tsv")
    best = history.records[history.best_epoch - 1]
    sys.stdout.write(f"best_epoch\t{history.best_epoch}\ndev_acc\t{best.dev_acc:.4f}\n")
    return EXIT_OK


def _load_model(path, cfg: RunConfig):
    from dataclasses import replace

    from .model import load_checkpoint

    if not os.path.exists(path):
        raise FileNotFoundError(f"checkpoint not found: {path}")
    params = load_checkpoint(path)
    # Decode-time settings may be overridden per run.
    changes = {}
    if "beam" in cfg.explicit:
        changes["beam_width"] = cfg["beam"]
    if "max_output_len" in cfg.explicit:
        changes["max_output_len"] = cfg["max_output_len"]
    if changes:
        params.config = replace(params.config, **changes)
    return params


def _decode(instances, params):
    from .model import greedy_decode, predict

    if params.config.beam_width == 1:
        return greedy_decode(instances, params)
    return predict(instances, params)


def cmd_predict(args, cfg: RunConfig) -> int:
    from .evaluation import export_heatmap, output_labels
    from .model import attention_labels

    params = _load_model(args.checkpoint, cfg)
    schema = cfg.schema
    insts = read_instances(args.input, schema)
    needs_trace = args.trace is not None
    if needs_trace:
        from .model import predict

        preds = predict(insts, params)
        os.makedirs(args.trace, exist_ok=True)
    else:
        preds = _decode(insts, params)
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        for inst, pred in zip(insts, preds):
            fh.write(format_instance(Instance(inst.sources, inst.target_tag, pred.form or None), schema) + "\n")
    if needs_trace:
        width = len(str(len(insts)))
        for i, (inst, pred) in enumerate(zip(insts, preds), 1):
            export_heatmap(
                pred.attention,
                attention_labels(inst, params.config),
                output_labels(pred.ids, params.vocab),
                csv_path=os.path.join(args.trace, f"{i:0{width}d}.csv"),
            )
    return EXIT_OK


def cmd_evaluate(args, cfg: RunConfig) -> int:
    from .evaluation import accuracy

    schema = cfg.schema
    preds = read_instances(args.predictions, schema)
    golds = read_instances(args.gold, schema)
    if len(preds) != len(golds):
        raise LengthMismatch(f"{len(preds)} predictions vs {len(golds)} gold rows")
    for i, (p, g) in enumerate(zip(preds, golds), 1):
        if p.sources != g.sources or p.target_tag != g.target_tag:
            raise InstanceMismatch(f"line {i}: prediction and gold inputs differ")
        if g.target_form is None:
            raise EmptySplit(f"line {i}: gold file lacks a target form")
    report = accuracy([p.target_form or "" for p in preds], [g.target_form for g in golds])
    _write_text(args.out, report.to_tsv())
    if args.out:
        sys.stdout.write(f"accuracy={report.accuracy:.4f}\n")
    return EXIT_OK


def cmd_summarize(args, cfg: RunConfig) -> int:
    from .evaluation import read_report

    labels, accs = [], []
    for item in args.reports:
        label, sep, path = item.partition("=")
        if not sep or not label or not path:
            raise UsageError(f"expected LABEL=REPORT, got {item!r}")
        labels.append(label)
        accs.append(read_report(path).accuracy)
    text = "\t".join(["", *labels]) + "\n" + "\t".join([args.row, *(f"{a:.4f}" for a in accs)]) + "\n"
    _write_text(args.out, text)
    return EXIT_OK


def cmd_curve(args, cfg: RunConfig) -> int:
    from .evaluation import learning_curve

    schema = cfg.schema
    report = learning_curve(
        read_instances(args.train, schema),
        read_instances(args.dev, schema),
        read_instances(args.test, schema),
        cfg["levels"],
        cfg.model_config(),
        cfg.train_config(),
        seed=cfg["seed"],
    )
    _write_text(args.out, report.to_tsv())
    return EXIT_OK


def cmd_heatmap(args, cfg: RunConfig) -> int:
    from .evaluation import export_heatmap, output_labels
    from .model import attention_labels, predict

    params = _load_model(args.checkpoint, cfg)
    insts = read_instances(args.input, cfg.schema)
    if not 1 <= args.index <= len(insts):
        raise UsageError(f"--index must lie in [1, {len(insts)}]")
    inst = insts[args.index - 1]
    pred = predict([inst], params)[0]
    export_heatmap(
        pred.attention,
        attention_labels(inst, params.config),
        output_labels(pred.ids, params.vocab),
        csv_path=args.csv,
        svg_path=args.svg,
    )
    sys.stdout.write(f"prediction\t{pred.form}\n")
    return EXIT_OK


def gradcheck_instances() -> list[Instance]:
    """Three fixed instances whose vocabulary has 19 symbols."""

    def inst(sources, tag, form):
        return Instance(tuple((f, MorphTag(tuple(t.split(";")))) for t, f in sources), MorphTag(tuple(tag.split(";"))), form)

    return [
        inst([("V;PRS", "abc"), ("V;PST", "abd")], "V;SBJ", "abe"),
        inst([("V;1", "ca"), ("V;2", "cb")], "V;3", "cab"),
        inst([("N;SG", "dd")], "N;PL", "dde"),
    ]


def run_gradcheck(cfg: RunConfig) -> float:
    """Max relative error of the whole-model gradient on the small model."""
    from dataclasses import replace

    from .model import batch_loss, make_batch, random_params
    from .numerics import grad_check

    insts = gradcheck_instances()
    mcfg = replace(cfg.model_config(), embed_dim=8, hidden_dim=8, max_k=2, max_output_len=8)
    for key, field_name in (("embed_dim", "embed_dim"), ("hidden_dim", "hidden_dim"), ("k", "max_k")):
        if key in cfg.explicit:
            mcfg = replace(mcfg, **{field_name: cfg[key]})
    params = random_params(mcfg, build_vocab(insts), np.random.default_rng(cfg["seed"]), scale=0.5)
    batch = make_batch(insts, params)
    return grad_check(lambda tape: batch_loss(tape, params, batch), list(params), step=1e-5)


def cmd_gradcheck(args, cfg: RunConfig) -> int:
    t0 = time.perf_counter()
    err = run_gradcheck(cfg)
    ok = err < GRADCHECK_THRESHOLD
    sys.stdout.write(f"max_rel_error\t{err:.3e}\nthreshold\t{GRADCHECK_THRESHOLD:.0e}\nstatus\t{'pass' if ok else 'FAIL'}\n")
    logger.info("gradcheck took %.1fs", time.perf_counter() - t0)
    return EXIT_OK if ok else EXIT_THRESHOLD


# ---- entry point ----------------------------------------------------------


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s", stream=sys.stderr)
    try:
        cfg = resolve_config(args)
    except OSError as exc:
        sys.stderr.write(f"msreinflect: cannot read config: {exc}\n")
        return EXIT_IO
    except UsageError as exc:
        sys.stderr.write(f"msreinflect: {exc}\n")
        return EXIT_USAGE
    cfg.echo()
    try:
        if cfg["threads"] is not None:
            from threadpoolctl import threadpool_limits

            with threadpool_limits(limits=cfg["threads"]):
                return args.func(args, cfg)
        return args.func(args, cfg)
    except UsageError as exc:
        sys.stderr.write(f"msreinflect: {exc}\n")
        return EXIT_USAGE
    except _IO_ERRORS as exc:
        sys.stderr.write(f"msreinflect: {type(exc).__name__}: {exc}\n")
        return EXIT_IO
    except (ReinflectionError, ValueError) as exc:
        sys.stderr.write(f"msreinflect: {type(exc).__name__}: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
