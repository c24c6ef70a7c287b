import argparse
import json
import logging
import sys
from pathlib import Path

from config import Config
from audit_logger import get_audit_logger
from nestgraph import NestGraph, TrainConfig
from nestgraph.core.exceptions import DimensionError, NestGraphError, NumericError, ValidationError
from nestgraph.graph import Graph, SyntheticSpec

logger = logging.getLogger("nestgraph.cli")

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERIC = 3


def print_json(document):
    print(json.dumps(document, indent=2, sort_keys=True, default=str))


def dataset_for(nest: NestGraph, args) -> Graph:
    """--data when given, else the dataset the checkpoint was trained on, else the data directory"""
    data = args.data or nest.training.dataset_of(args.checkpoint) or nest.context.data_dir
    return nest.graphs.load(data)


def train_command(nest: NestGraph, args) -> int:
    config = TrainConfig.load(args.config)
    if args.seed is not None:
        config = config.replace(seed=args.seed)
    if args.holdout is not None:
        config = config.replace(link_holdout=args.holdout)
    graph = nest.graphs.load(args.data)
    split = nest.graphs.split(graph, args.folds, config.seed) if args.folds else None
    result = nest.training.train(config, graph, split=split, fold=args.fold, out_dir=args.out, resume=args.resume,
                                 data=nest.context.resolve(args.data).resolve())
    print_json(result.summary())
    return EXIT_OK


def eval_node_command(nest: NestGraph, args) -> int:
    graph = dataset_for(nest, args)
    checkpoint = nest.training.load_checkpoint(args.checkpoint, graph=graph)
    report = nest.evaluation.node_classification(checkpoint.config, graph, folds=args.folds,
                                                 init_from=checkpoint.path)
    report.save(Path(args.out or checkpoint.path) / "eval_node.json")
    print_json(report.to_dict())
    return EXIT_OK


def eval_link_command(nest: NestGraph, args) -> int:
    graph = dataset_for(nest, args)
    checkpoint = nest.training.load_checkpoint(args.checkpoint, graph=graph)
    report = nest.evaluation.link_prediction(checkpoint, graph, holdout=args.holdout, negatives=args.negatives)
    report.save(Path(args.out or checkpoint.path) / "eval_link.json")
    print_json(report.to_dict())
    return EXIT_OK


def export_command(nest: NestGraph, args) -> int:
    graph = dataset_for(nest, args)
    if args.what == "attention":
        result = nest.exports.attention(args.checkpoint, graph, out_dir=args.out, layer=args.layer)
    else:
        result = nest.exports.export(args.what, args.checkpoint, graph, out_dir=args.out)
    print_json(result.summary())
    return EXIT_OK


def diagnose_command(nest: NestGraph, args) -> int:
    graph = dataset_for(nest, args)
    checkpoint = nest.training.load_checkpoint(args.checkpoint, graph=graph)
    if args.what == "concentration":
        report = nest.evaluation.concentration_report(checkpoint, graph, fraction=args.fraction)
    elif args.what == "attention":
        report = nest.evaluation.attention_report(checkpoint, graph, per_neighbor=args.per_neighbor)
    else:
        if not args.planted:
            raise ValidationError("hierarchy diagnostics need --planted", field="planted")
        report = nest.evaluation.hierarchy_report(checkpoint, graph, nest.graphs.planted(args.planted, graph))
    target = Path(args.out or checkpoint.path) / f"diagnose_{args.what}.json"
    target.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    print_json(report)
    return EXIT_OK


def synth_command(nest: NestGraph, args) -> int:
    spec = SyntheticSpec.load(args.spec)
    if args.seed is not None:
        spec.seed = args.seed
    synthetic = nest.graphs.synthesize(spec, out_dir=args.out)
    print_json(synthetic.graph.summary())
    return EXIT_OK


def gradcheck_command(nest: NestGraph, args) -> int:
    config = TrainConfig.load(args.config)
    report = nest.training.gradient_check(config, eps=args.eps)
    print_json(report.to_dict())
    return EXIT_OK if report.passed else EXIT_NUMERIC


def audit_command(nest: NestGraph, args) -> int:
    ledger = get_audit_logger()
    if ledger is None:
        print("Audit ledger is disabled (NESTGRAPH_AUDIT_ENABLED=false)")
        return EXIT_OK
    if args.stats:
        print_json(ledger.get_operation_stats())
    else:
        print_json(ledger.get_audit_logs(limit=args.limit, run_id=args.run, operation_type=args.operation))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nestgraph", description="Hierarchical membership graph embeddings")
    commands = parser.add_subparsers(dest="command", required=True)

    train = commands.add_parser("train", help="train on a dataset directory")
    train.add_argument("--config", required=True, help="TrainConfig JSON")
    train.add_argument("--data", required=True, help="dataset directory")
    train.add_argument("--out", required=True, help="checkpoint directory")
    train.add_argument("--seed", type=int, help="override the configured seed")
    train.add_argument("--holdout", type=float, help="override link_holdout (edges held out for eval-link)")
    train.add_argument("--folds", type=int, help="attach the classifier head using this many folds")
    train.add_argument("--fold", type=int, default=0, help="held-out fold when --folds is given")
    train.add_argument("--resume", help="continue from this checkpoint directory")
    train.set_defaults(handler=train_command)

    eval_node = commands.add_parser("eval-node", help="cross-validated node classification")
    eval_node.add_argument("--checkpoint", required=True)
    eval_node.add_argument("--data", help="dataset directory (default: the checkpoint's)")
    eval_node.add_argument("--folds", type=int, default=5)
    eval_node.add_argument("--out")
    eval_node.set_defaults(handler=eval_node_command)

    eval_link = commands.add_parser("eval-link", help="link prediction on held-out edges")
    eval_link.add_argument("--checkpoint", required=True)
    eval_link.add_argument("--data", help="dataset directory (default: the checkpoint's)")
    eval_link.add_argument("--holdout", type=float, default=0.1)
    eval_link.add_argument("--negatives", type=int)
    eval_link.add_argument("--out")
    eval_link.set_defaults(handler=eval_link_command)

    export = commands.add_parser("export", help="write embeddings, memberships or attention as CSV")
    export.add_argument("--checkpoint", required=True)
    export.add_argument("--what", required=True, choices=["embeddings", "memberships", "attention"])
    export.add_argument("--data", help="dataset directory (default: the checkpoint's)")
    export.add_argument("--layer", type=int, help="attention layer (default: all)")
    export.add_argument("--out")
    export.set_defaults(handler=export_command)

    diagnose = commands.add_parser("diagnose", help="concentration, attention divergence or hierarchy report")
    diagnose.add_argument("--checkpoint", required=True)
    diagnose.add_argument("--what", required=True, choices=["concentration", "attention", "hierarchy"])
    diagnose.add_argument("--data", help="dataset directory (default: the checkpoint's)")
    diagnose.add_argument("--planted", help="planted.csv written by synth")
    diagnose.add_argument("--fraction", type=float, default=0.1)
    diagnose.add_argument("--per-neighbor", action="store_true")
    diagnose.add_argument("--out")
    diagnose.set_defaults(handler=diagnose_command)

    synth = commands.add_parser("synth", help="generate a nested SBM dataset")
    synth.add_argument("--spec", required=True, help="SyntheticSpec JSON")
    synth.add_argument("--out", required=True)
    synth.add_argument("--seed", type=int)
    synth.set_defaults(handler=synth_command)

    gradcheck = commands.add_parser("gradcheck", help="finite-difference check on the 20-node fixture")
    gradcheck.add_argument("--config", required=True)
    gradcheck.add_argument("--eps", type=float, default=1e-4)
    gradcheck.set_defaults(handler=gradcheck_command)

    audit = commands.add_parser("audit", help="show the run ledger")
    audit.add_argument("--limit", type=int, default=20)
    audit.add_argument("--run")
    audit.add_argument("--operation")
    audit.add_argument("--stats", action="store_true")
    audit.set_defaults(handler=audit_command)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        Config.configure_logging()
        nest = NestGraph()
        return args.handler(nest, args)
    except NumericError as e:
        logger.error("numeric failure: %s", e)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValidationError, DimensionError) as e:
        logger.error("validation failure: %s", e)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except NestGraphError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.error_code


if __name__ == "__main__":
    sys.exit(main())
