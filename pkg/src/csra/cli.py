"""Command-line interface: ``csra {train,eval,rescore,attend,inspect}``.

Machine-readable results go to the files named by ``--out``/``--report``;
human-readable tables go to stdout. Exit status is 0 on success, 1 on any
error (one-line diagnostic on stderr) and 2 on usage errors.
"""

import argparse
import json
import math
import sys
import warnings
from pathlib import Path

from . import io
from .errors import CSRAError, ParameterError
from .heatmap import MODES, attention_image, write_pnm
from .metrics import evaluate
from .multihead import HeadConfig
from .rescore import FAMILY_LAMBDA, rescore, rescore_report, resolve_lambda
from .training import LabeledFeatureSet, TrainConfig, predict_logits, sigmoid, train


def _float_list(text):
    out = []
    for tok in text.split(","):
        tok = tok.strip().lower()
        if tok in ("inf", "infinity", "+inf"):
            out.append(math.inf)
        else:
            try:
                out.append(float(tok))
            except ValueError:
                raise argparse.ArgumentTypeError(f"not a number: {tok!r}") from None
    return out


def _size(text):
    parts = text.lower().replace("x", ",").split(",")
    try:
        if len(parts) == 1:
            return int(parts[0]), int(parts[0])
        h, w = (int(p) for p in parts)
        return h, w
    except ValueError:
        raise argparse.ArgumentTypeError(f"size must be N or HxW, got {text!r}") from None


def _write_json(path, obj):
    io._atomic_write(Path(path), (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode())


def _load_labeled(features_path, labels_path):
    ids, feats = io.load_samples(features_path, "features", 3)
    label_ids, labels = io.read_label_file(labels_path)
    ids, labels = io.align_labels(ids, len(feats), label_ids, labels, labels_path)
    return LabeledFeatureSet(feats, labels, ids)


def cmd_train(args):
    data = _load_labeled(args.features, args.labels)
    val = _load_labeled(args.val_features, args.val_labels) if args.val_features else None
    cfg = HeadConfig(H=args.heads, lam=args.lam, temperatures=args.temps,
                     normalize=args.normalize, pooling=args.pooling)
    tcfg = TrainConfig(epochs=args.epochs, batch_size=args.batch_size, lr=args.lr,
                       momentum=args.momentum, weight_decay=args.weight_decay,
                       warmup_epochs=args.warmup, seed=args.seed)
    model, report = train(data, cfg, tcfg, val=val)
    io.save_model(args.out, model)
    print(f"{'epoch':>5} {'loss':>10}" + (f" {'val mAP':>8}" if val else ""))
    for e, loss in enumerate(report.epoch_loss):
        line = f"{e + 1:5d} {loss:10.6f}"
        if val:
            line += f" {100 * report.val_map[e]:8.2f}"
        print(line)
    if args.report:
        _write_json(args.report, {
            **report.to_dict(),
            "heads": cfg.H, "lambda": cfg.lam, "normalize": cfg.normalize,
            "temperatures": [None if math.isinf(t) else t for t in cfg.temperatures],
            "pooling": cfg.pooling, "seed": tcfg.seed,
        })
    return 0


def cmd_eval(args):
    data = _load_labeled(args.features, args.labels)
    model = io.load_model(args.model)
    probs = sigmoid(predict_logits(model, data.features))
    report = evaluate(probs, data.labels, threshold=args.threshold,
                      interpolation=args.ap, topk_mode=args.topk_mode)
    print(report.format_table())
    if args.report:
        _write_json(args.report, report.to_dict())
    if args.scores_out:
        io.write_tensor_file(args.scores_out, {"scores": probs})
    return 0


def cmd_rescore(args):
    ids, scores = _load_scores(args.scores)
    if args.lambdas and args.lam is None and args.family is None:
        lam = args.lambdas[0]
    else:
        lam = resolve_lambda(args.lam, args.family)
    if args.labels:
        label_ids, labels = io.read_label_file(args.labels)
        ids, labels = io.align_labels(ids, len(scores), label_ids, labels, args.labels)
        logits, report = rescore_report(scores, labels, lam, args.threshold, args.lambdas)
        print(f"lambda = {lam:g}")
        print(report.format_table())
        if "sweep" in report.extra:
            print(f"\n{'lambda':>8} {'mAP':>7}")
            for row in report.extra["sweep"]:
                print(f"{row['lambda']:8g} {100 * row['mAP']:7.2f}")
        if args.report:
            _write_json(args.report, report.to_dict())
    else:
        logits = rescore(scores, lam)
        print(f"lambda = {lam:g}; rescored {len(scores)} samples")
    if args.out:
        io.write_tensor_file(args.out, {"scores": logits})
    return 0


def _load_scores(path):
    tensors = io.read_tensor_file(path)
    if "scores" in tensors:
        batch = tensors["scores"]
        if batch.ndim not in (3, 4):
            raise ParameterError(f"{path}: 'scores' must be [N, C, n] or [N, C, h, w]")
        return None, list(batch)
    for name, arr in tensors.items():
        if arr.ndim not in (2, 3):
            raise ParameterError(f"{path}: entry {name!r} must be [C, n] or [C, h, w]")
    return list(tensors), list(tensors.values())


def cmd_attend(args):
    ids, feats = io.load_samples(args.features, "features", 3)
    model = io.load_model(args.model)
    if args.sample is None:
        index = 0
    elif ids is None:
        try:
            index = int(args.sample)
        except ValueError:
            raise ParameterError(f"sample {args.sample!r} must be an index for batched features")
        if not 0 <= index < len(feats):
            raise IndexError(f"sample index {index} out of range for {len(feats)} samples")
    else:
        if args.sample not in ids:
            raise ParameterError(f"no sample with id {args.sample!r}")
        index = ids.index(args.sample)
    img = attention_image(feats[index], model, args.class_index, args.size,
                          head=args.head, mode=args.mode, color=args.color)
    write_pnm(args.out, img)
    print(f"wrote {args.out} ({img.shape[1]}x{img.shape[0]}, class {args.class_index})")
    return 0


def cmd_inspect(args):
    tensors = io.read_tensor_file(args.file)
    print(f"{args.file}: {len(tensors)} entries")
    for name, arr in tensors.items():
        dims = "x".join(str(s) for s in arr.shape)
        print(f"  {name:24} [{dims}]  min {arr.min():.6g}  max {arr.max():.6g}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="csra", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a CSRA head on precomputed features")
    t.add_argument("--features", required=True)
    t.add_argument("--labels", required=True)
    t.add_argument("--out", required=True, help="model file to write")
    t.add_argument("--val-features")
    t.add_argument("--val-labels")
    t.add_argument("--heads", type=int, default=1)
    t.add_argument("--temps", type=_float_list, default=None,
                   help="comma-separated temperatures, 'inf' allowed")
    t.add_argument("--lambda", dest="lam", type=float, default=0.1)
    t.add_argument("--normalize", action=argparse.BooleanOptionalAction, default=True)
    t.add_argument("--pooling", choices=("residual", "spatial"), default="residual")
    t.add_argument("--epochs", type=int, default=10)
    t.add_argument("--batch-size", type=int, default=16)
    t.add_argument("--lr", type=float, default=0.1)
    t.add_argument("--momentum", type=float, default=0.9)
    t.add_argument("--weight-decay", type=float, default=1e-4)
    t.add_argument("--warmup", type=float, default=1.0, help="warmup epochs")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--report", help="JSON training report")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a model on labeled features")
    e.add_argument("--features", required=True)
    e.add_argument("--labels", required=True)
    e.add_argument("--model", required=True)
    e.add_argument("--threshold", type=float, default=0.5)
    e.add_argument("--ap", choices=("all", "11point"), default="all")
    e.add_argument("--topk-mode", choices=("threshold", "rank"), default="threshold")
    e.add_argument("--report", help="JSON metrics report")
    e.add_argument("--scores-out", help="tensor file for predicted probabilities")
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("rescore", help="training-free mean + lambda * max rescoring")
    r.add_argument("--scores", required=True, help="tensor file of score tensors")
    r.add_argument("--lambda", dest="lam", type=float, default=None)
    r.add_argument("--family", choices=sorted(FAMILY_LAMBDA), default=None)
    r.add_argument("--lambdas", type=_float_list, default=None, help="lambda sweep list")
    r.add_argument("--labels")
    r.add_argument("--threshold", type=float, default=0.5)
    r.add_argument("--out", help="tensor file for rescored logits")
    r.add_argument("--report", help="JSON metrics report")
    r.set_defaults(func=cmd_rescore)

    a = sub.add_parser("attend", help="export an attention heatmap")
    a.add_argument("--features", required=True)
    a.add_argument("--model", required=True)
    a.add_argument("--class", dest="class_index", type=int, required=True)
    a.add_argument("--sample", default=None, help="sample id (or index for batched files)")
    a.add_argument("--head", type=int, default=0)
    a.add_argument("--size", type=_size, default=(224, 224), help="N or HxW")
    a.add_argument("--mode", choices=MODES, default="bilinear")
    a.add_argument("--color", action="store_true", help="P6 with the jet colormap")
    a.add_argument("--out", required=True)
    a.set_defaults(func=cmd_attend)

    i = sub.add_parser("inspect", help="list the entries of a tensor file")
    i.add_argument("file")
    i.set_defaults(func=cmd_inspect)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    def show(message, category, filename, lineno, file=None, line=None):
        print(f"csra {args.command}: warning: {message}", file=sys.stderr)

    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            warnings.showwarning = show
            return args.func(args)
    except (CSRAError, OSError, ValueError, IndexError) as exc:
        print(f"csra {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
