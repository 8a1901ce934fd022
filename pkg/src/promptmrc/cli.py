"""``promptmrc`` command line: convert, synth, train, crossval, predict, pipeline, eval,
compare-strategies, cross-split.

Errors print ``error[<category>]: <message>`` to stderr and exit nonzero:
2 for configuration/usage problems, 3 for corpus parse errors, 4 for
training divergence, 1 for anything else.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import kernels
from .corpus import ParseError, read_corpus, write_corpus
from .harness import compare_question_strategies, cross_split_eval
from .instances import read_jsonl, write_jsonl
from .metrics import Criterion, evaluate_concepts, evaluate_relations, reports_to_json, reports_to_tsv
from .model import CheckpointError, MrcModel
from .pipeline import check_schema, concept_output, predict_concepts, run_end_to_end, write_predictions
from .synth import SYNTH_SCHEMA_CONFIG, SyntheticCorpusSpec, generate_corpus
from .templates import ConfigError, Strategy, load_schema_templates
from .training import TrainConfig, TrainingDiverged, cross_validate, task_instances, train_model

CONFIG_ENV = "PROMPTMRC_CONFIG"
EXIT_CODES = {"config": 2, "parse": 3, "training": 4, "runtime": 1}

# CLI flag -> TrainConfig field
_TRAIN_FLAGS = {
    "lr": "learning_rate", "batch_size": "batch_size", "epochs": "max_epochs", "patience": "patience",
    "d": "d", "layers": "num_layers", "heads": "num_heads", "ffn": "ffn_size", "dropout": "dropout_rate",
    "max_seq_len": "max_seq_len", "tau": "tau", "max_span_len": "max_span_len", "alpha": "alpha",
    "beta": "beta", "gamma": "gamma", "optimizer": "optimizer", "folds": "folds",
}


class CliError(Exception):
    def __init__(self, category: str, message: str):
        super().__init__(message)
        self.category = category


def _load_config(path: str | None) -> dict:
    path = path or os.environ.get(CONFIG_ENV)
    if not path:
        return {}
    p = Path(path)
    if not p.is_file():
        raise CliError("config", f"config file not found: {p}")
    try:
        return json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CliError("config", f"{p}: invalid JSON ({exc})")


def train_config(args) -> TrainConfig:
    """Config file values, then command-line flags (flags win)."""
    data = dict(args.config_data.get("train", {}))
    for flag, name in _TRAIN_FLAGS.items():
        value = getattr(args, flag, None)
        if value is not None:
            data[name] = value
    if args.seed is not None:
        data["seed"] = args.seed
    try:
        return TrainConfig.from_dict(data)
    except (TypeError, ValueError) as exc:
        raise CliError("config", str(exc))


def _strategy(args) -> Strategy:
    value = args.strategy or args.config_data.get("strategy", "natural")
    return Strategy.parse(value)


def _schema(args):
    path = args.schema or args.config_data.get("schema")
    if not path:
        raise CliError("config", "--schema is required")
    if str(path) not in ("drug_ade", "sdoh") and not Path(path).is_file():
        raise CliError("config", f"schema file not found: {path}")
    return load_schema_templates(path)


def _corpus(path, schema):
    if not Path(path).is_dir():
        raise CliError("config", f"corpus directory not found: {path}")
    return read_corpus(path, schema)


def _load_model(path):
    if not Path(path).is_file():
        raise CliError("config", f"checkpoint not found: {path}")
    return MrcModel.load(path)


def _emit(text: str, path: str | None) -> None:
    if path:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------- commands

def cmd_synth(args) -> int:
    spec = SyntheticCorpusSpec(num_documents=args.docs, nesting_rate=args.nesting_rate,
                               relation_density=args.relation_density, vocabulary_size=args.vocab_size,
                               seed=args.seed or 0, vocabulary=args.vocabulary, doc_prefix=args.prefix)
    docs = generate_corpus(spec)
    write_corpus(docs, args.out)
    schema_path = Path(args.out) / "schema.json"
    schema_path.write_text(json.dumps(SYNTH_SCHEMA_CONFIG, indent=2) + "\n", encoding="utf-8")
    print(f"synth\tdocuments={len(docs)}\tconcepts={sum(len(d.concepts) for d in docs)}\t"
          f"relations={sum(len(d.relations) for d in docs)}\tschema={schema_path}")
    return 0


def cmd_convert(args) -> int:
    schema = _schema(args)
    docs = _corpus(args.brat, schema)
    strategy = _strategy(args)
    insts = task_instances(docs, schema, args.mode, strategy, args.max_seq_len or 128)
    n = write_jsonl(insts, args.out)
    nonempty = sum(1 for i in insts if i.answer_spans)
    print(f"convert\tmode={args.mode}\tdocuments={len(docs)}\tinstances={n}\tnonempty={nonempty}")
    return 0


def cmd_train(args) -> int:
    config = train_config(args)
    schema = _schema(args) if (args.schema or args.config_data.get("schema")) else None
    if args.instances:
        insts = read_jsonl(args.instances)
    elif args.brat:
        if schema is None:
            raise CliError("config", "--schema is required with --brat")
        insts = task_instances(_corpus(args.brat, schema), schema, args.task, _strategy(args),
                               config.max_seq_len)
    else:
        raise CliError("config", "train needs --instances or --brat")
    if not insts:
        raise CliError("config", "no training instances")
    val = read_jsonl(args.val_instances) if args.val_instances else None
    log_fh = open(args.log, "w", encoding="utf-8") if args.log else None
    try:
        model = train_model(insts, config, val, schema=schema,
                            log=(lambda line: log_fh.write(line + "\n")) if log_fh else None)
    finally:
        if log_fh:
            log_fh.close()
    model.save(args.out)
    hist = model.metadata.get("history", [])
    last = hist[-1] if hist else {}
    print(f"train\tinstances={len(insts)}\tepochs={len(hist)}\tbest_epoch={model.metadata.get('epoch')}\t"
          f"final_loss={last.get('l_total', float('nan')):.6f}\tcheckpoint={args.out}")
    return 0


def cmd_crossval(args) -> int:
    schema = _schema(args)
    docs = _corpus(args.brat, schema)
    config = train_config(args)
    if args.grid_lr:
        config = replace(config, grid_learning_rates=tuple(args.grid_lr))
    if args.grid_bs:
        config = replace(config, grid_batch_sizes=tuple(args.grid_bs))
    try:
        result = cross_validate(docs, schema, config, _strategy(args), jobs=args.jobs)
    except ValueError as exc:
        raise CliError("config", str(exc))
    _emit(result.to_tsv(), args.out)
    print(f"crossval\truns={len(result.table)}\tbest_lr={result.best.learning_rate:g}\t"
          f"best_batch={result.best.batch_size}", file=sys.stderr if not args.out else sys.stdout)
    return 0


def cmd_predict(args) -> int:
    schema = _schema(args)
    model = _load_model(args.checkpoint)
    check_schema(model, schema, "concept")
    docs = _corpus(args.brat, None)
    strategy = _strategy(args)
    outputs = [concept_output(d, predict_concepts(model, d, schema, strategy, tau=args.tau)) for d in docs]
    write_predictions(outputs, {d.doc_id: d.text for d in docs}, args.out)
    print(f"predict\tdocuments={len(docs)}\tconcepts={sum(len(o.concepts) for o in outputs)}\tout={args.out}")
    return 0


def cmd_pipeline(args) -> int:
    schema = _schema(args)
    strategy = _strategy(args)
    trigger_model = None if args.oracle_triggers else _load_model(args.trigger_model)
    relation_model = _load_model(args.relation_model)
    docs = _corpus(args.brat, schema if args.oracle_triggers else None)
    outputs = [run_end_to_end(d, trigger_model, relation_model, schema, strategy, tau=args.tau,
                              oracle_triggers=args.oracle_triggers) for d in docs]
    write_predictions(outputs, {d.doc_id: d.text for d in docs}, args.out)
    print(f"pipeline\tdocuments={len(docs)}\ttriggers={sum(o.diagnostics['triggers'] for o in outputs)}\t"
          f"triples={sum(len(o.triples) for o in outputs)}\tout={args.out}")
    return 0


def cmd_eval(args) -> int:
    schema = _schema(args) if (args.schema or args.config_data.get("schema")) else None
    gold = _corpus(args.gold, schema)
    pred = _corpus(args.pred, None)
    crits = [Criterion.STRICT, Criterion.LENIENT] if args.criterion == "both" else [Criterion(args.criterion)]
    reports = []
    for crit in crits:
        reports.append(evaluate_concepts(gold, pred, crit))
        if not args.concepts_only:
            reports.append(evaluate_relations(gold, pred, crit))
    tsv = reports_to_tsv(reports)
    if args.json:
        _emit(reports_to_json(reports), args.json)
    if args.tsv:
        _emit(tsv, args.tsv)
    sys.stdout.write(tsv)
    for r in reports:
        print(f"{r.task}\t{r.criterion.value}\tmicro_f1={r.micro.f1:.4f}")
    return 0


def cmd_compare(args) -> int:
    schema = _schema(args)
    train_docs = _corpus(args.train, schema)
    test_docs = _corpus(args.test, schema)
    result = compare_question_strategies(train_docs, test_docs, schema, train_config(args))
    _emit(result.to_tsv(), args.out)
    if args.out:
        print(result.to_tsv(), end="")
    return 0


def cmd_cross_split(args) -> int:
    schema = _schema(args)
    train_docs = _corpus(args.train, schema)
    same = _corpus(args.test_same, schema)
    other = _corpus(args.test_other, schema)
    report = cross_split_eval(train_docs, same, other, schema, train_config(args), _strategy(args))
    _emit(report.to_tsv(), args.out)
    if args.out:
        print(report.to_tsv(), end="")
    return 0


# ------------------------------------------------------------------ parser

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", default=None, help=f"JSON config file (default: ${CONFIG_ENV})")
    p.add_argument("--schema", default=None, help="schema/template JSON, or 'drug_ade' / 'sdoh'")
    p.add_argument("--strategy", choices=[s.value for s in Strategy], default=None)
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--layers", type=int)
    p.add_argument("--heads", type=int)
    p.add_argument("--ffn", type=int)
    p.add_argument("--dropout", type=float)
    p.add_argument("--max-seq-len", type=int)
    p.add_argument("--tau", type=float)
    p.add_argument("--max-span-len", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--optimizer", choices=["adam", "sgd"])
    p.add_argument("--folds", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="promptmrc", description=__doc__.split("\n")[0])
    parser.add_argument("--backend", choices=["numba", "numpy"], default=None,
                        help="kernel backend (default from PROMPTMRC_NUMBA)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic BRAT corpus")
    _add_common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--docs", type=int, default=50)
    p.add_argument("--nesting-rate", type=float, default=0.3)
    p.add_argument("--relation-density", type=float, default=0.8)
    p.add_argument("--vocab-size", type=int, default=30)
    p.add_argument("--vocabulary", choices=["base", "shifted"], default="base")
    p.add_argument("--prefix", default="doc")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("convert", help="BRAT corpus -> JSON-Lines MRC instances")
    _add_common(p)
    p.add_argument("--brat", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=["concept", "trigger", "relation"], default="concept")
    p.add_argument("--max-seq-len", type=int)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("train", help="train a span-extraction model")
    _add_common(p)
    _add_train_flags(p)
    p.add_argument("--instances")
    p.add_argument("--brat")
    p.add_argument("--task", choices=["concept", "trigger", "relation"], default="concept")
    p.add_argument("--val-instances")
    p.add_argument("--out", required=True)
    p.add_argument("--log", help="tab-separated progress log")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("crossval", help="grid search with document-level k-fold CV")
    _add_common(p)
    _add_train_flags(p)
    p.add_argument("--brat", required=True)
    p.add_argument("--grid-lr", type=float, nargs="+")
    p.add_argument("--grid-bs", type=int, nargs="+")
    p.add_argument("--out")
    p.set_defaults(func=cmd_crossval)

    p = sub.add_parser("predict", help="concept predictions as BRAT")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--brat", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--tau", type=float)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("pipeline", help="end-to-end trigger -> relation extraction")
    _add_common(p)
    p.add_argument("--trigger-model")
    p.add_argument("--relation-model", required=True)
    p.add_argument("--oracle-triggers", action="store_true")
    p.add_argument("--brat", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--tau", type=float)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("eval", help="strict/lenient micro P/R/F1")
    _add_common(p)
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--criterion", choices=["strict", "lenient", "both"], default="both")
    p.add_argument("--concepts-only", action="store_true")
    p.add_argument("--json")
    p.add_argument("--tsv")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare-strategies", help="natural vs pseudo questions")
    _add_common(p)
    _add_train_flags(p)
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("cross-split", help="train on A, test on A and B")
    _add_common(p)
    _add_train_flags(p)
    p.add_argument("--train", required=True)
    p.add_argument("--test-same", required=True)
    p.add_argument("--test-other", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_cross_split)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.backend:
        kernels.set_backend(args.backend)
    try:
        args.config_data = _load_config(getattr(args, "config", None))
        if args.command == "pipeline" and not args.oracle_triggers and not args.trigger_model:
            raise CliError("config", "--trigger-model is required unless --oracle-triggers is set")
        return args.func(args)
    except CliError as exc:
        category, message = exc.category, str(exc)
    except (ConfigError, CheckpointError) as exc:
        category, message = "config", str(exc)
    except FileNotFoundError as exc:
        category, message = "config", str(exc)
    except ParseError as exc:
        category, message = "parse", str(exc)
    except TrainingDiverged as exc:
        category, message = "training", str(exc)
    except (ValueError, RuntimeError, OSError) as exc:
        category, message = "runtime", str(exc)
    print(f"error[{category}]: {message}", file=sys.stderr)
    return EXIT_CODES[category]


if __name__ == "__main__":
    sys.exit(main())
