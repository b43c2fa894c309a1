"""Command-line front end.

Subcommands: gen-data, train, translate, interpolate, intersect, union,
eval-translate, eval-disentangle, ablate, inspect-checkpoint. Results go
to stdout as key=value lines; progress and diagnostics go to stderr.
Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
"""

import argparse
import os
import sys
from dataclasses import fields, replace

from . import evalsuite, infotheory, latentlab, model, ppm, synthworld, trainer
from .autodiff import Tensor
from .trainer import TrainConfig


class UsageError(Exception):
    pass


class ConfigError(ValueError):
    """Configuration file problem; message carries file and line."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# --- config files ---

_INT_KEYS = {"steps", "batch", "seed", "ckpt_every", "sep"}
_FLOAT_KEYS = {"lr", "beta1", "beta2", "eps", "lambda1", "lambda2"}
_BOOL_KEYS = {"disable_zero", "disable_adv", "disable_recon", "adv_b_term"}
_STR_KEYS = {"preset", "out_dir"}
_ALL_KEYS = _INT_KEYS | _FLOAT_KEYS | _BOOL_KEYS | _STR_KEYS
assert _ALL_KEYS == {f.name for f in fields(TrainConfig)}


def _parse_value(key, val):
    if key in _INT_KEYS:
        return int(val)
    if key in _FLOAT_KEYS:
        return float(val)
    if key in _BOOL_KEYS:
        low = val.lower()
        if low in ("1", "true", "yes"):
            return True
        if low in ("0", "false", "no"):
            return False
        raise ValueError(f"not a boolean: {val!r}")
    return val


def parse_config(path):
    """key=value lines with # comments into a TrainConfig.

    Unknown or repeated keys, malformed lines, and bad values are
    rejected with the offending line number.
    """
    kwargs = {}
    try:
        with open(path) as f:
            lines = f.readlines()
    except OSError as e:
        raise ConfigError(f"{path}: cannot read config: {e}") from e
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: malformed line (expected key=value): "
                              f"{raw.strip()!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _ALL_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        if key in kwargs:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        try:
            kwargs[key] = _parse_value(key, val)
        except ValueError:
            raise ConfigError(f"{path}:{lineno}: invalid value for {key}: {val!r}") from None
    try:
        return TrainConfig(**kwargs)
    except ValueError as e:
        raise ConfigError(f"{path}: {e}") from e


def _emit(**kv):
    for k, v in kv.items():
        print(f"{k}={v}")


def _diag(msg):
    print(msg, file=sys.stderr, flush=True)


def _read_images(paths):
    return [ppm.read_ppm(p) for p in paths]


# --- subcommands ---


def cmd_gen_data(args):
    rows = synthworld.generate_dataset(args.out, args.n, args.seed)
    _emit(dir=args.out, samples=len(rows))
    return 0


def cmd_train(args):
    cfg = parse_config(args.config) if args.config else TrainConfig()
    if args.out:
        cfg = replace(cfg, out_dir=args.out)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)

    def progress(step, report):
        if step % 500 == 0 or step == cfg.steps:
            _diag(f"step {step}/{cfg.steps} total={report.total:.4f} "
                  f"recon={(report.recon_a + report.recon_b):.4f}")

    trainer.train(cfg, resume=args.resume, progress=progress)
    _emit(out_dir=cfg.out_dir,
          checkpoint=os.path.join(cfg.out_dir, "model.ckpt"),
          loss_csv=os.path.join(cfg.out_dir, "loss.csv"),
          manifest=os.path.join(cfg.out_dir, "manifest.txt"))
    return 0


def cmd_translate(args):
    m = model.load_checkpoint(args.model)
    src, guide = _read_images([args.src, args.guide])
    fn = model.translate_a_to_b if args.direction == "ab" else model.translate_b_to_a
    out = fn(m, Tensor(src[None]), Tensor(guide[None])).data[0]
    ppm.write_ppm(args.out, out)
    _emit(out=args.out, direction=args.direction)
    return 0


_KIND_BY_FLAG = {"common-sepA": "interp_common_sepA",
                 "common-sepB": "interp_common_sepB",
                 "sepA-sepB": "interp_sepA_sepB"}


def cmd_interpolate(args):
    m = model.load_checkpoint(args.model)
    kind = _KIND_BY_FLAG[args.kind]
    imgs = _read_images(args.inputs)
    ids = [os.path.basename(p) for p in args.inputs]
    latentlab.render_grid(m, kind, args.beta_steps, args.alpha_steps, imgs,
                          args.out, ids=ids)
    _emit(out=args.out, manifest=args.out + ".txt", kind=kind,
          rows=args.beta_steps, cols=args.alpha_steps)
    return 0


def cmd_intersect(args):
    m = model.load_checkpoint(args.model)
    imgs = _read_images(args.inputs)
    if len(imgs) == 1:
        ppm.write_ppm(args.out, latentlab.intersection_image(m, imgs[0]))
        _emit(out=args.out, cells=1)
    else:
        ids = [os.path.basename(p) for p in args.inputs]
        latentlab.render_grid(m, "intersection", 1, len(imgs), imgs, args.out, ids=ids)
        _emit(out=args.out, manifest=args.out + ".txt", cells=len(imgs))
    return 0


def cmd_union(args):
    m = model.load_checkpoint(args.model)
    c_src = ppm.read_ppm(args.common)
    a_src = ppm.read_ppm(args.a_src) if args.a_src else None
    b_src = ppm.read_ppm(args.b_src) if args.b_src else None
    ppm.write_ppm(args.out, latentlab.union_image(m, c_src, a_src, b_src))
    _emit(out=args.out)
    return 0


def _classifier_for(args, world):
    if args.clf and os.path.exists(args.clf):
        _diag(f"loading classifier {args.clf}")
        return evalsuite.load_classifier(args.clf)
    _diag("training attribute classifier")
    clf = evalsuite.train_classifier(world)
    if args.clf:
        evalsuite.save_classifier(clf, args.clf)
        _diag(f"saved classifier {args.clf}")
    return clf


def cmd_eval_translate(args):
    m = model.load_checkpoint(args.model)
    world = synthworld.World()
    clf = _classifier_for(args, world)
    r = evalsuite.translation_accuracy(m, clf, n_pairs=args.pairs, seed=args.seed,
                                       world=world)
    if args.out:
        with open(args.out, "w") as f:
            f.write(r.csv())
    _emit(a_to_b=repr(r.a_to_b), b_to_a=repr(r.b_to_a),
          strict_a_to_b=repr(r.strict_a_to_b), strict_b_to_a=repr(r.strict_b_to_a),
          n_pairs=r.n_pairs,
          holdout_a=repr(clf.holdout_accuracy[0]), holdout_b=repr(clf.holdout_accuracy[1]))
    return 0


def cmd_eval_disentangle(args):
    m = model.load_checkpoint(args.model)
    world = synthworld.World()
    report = infotheory.verify_theorem(m, world, n=args.n, seed=args.seed)
    csv_path = args.out or os.path.join(os.path.dirname(os.path.abspath(args.model)),
                                        "report.csv")
    with open(csv_path, "w") as f:
        f.write(report.csv_header() + "\n" + report.csv_row() + "\n")
    sys.stdout.write(report.to_text())
    _emit(report_csv=csv_path)
    return 0


def cmd_ablate(args):
    cfg = parse_config(args.config) if args.config else TrainConfig()
    if args.out:
        cfg = replace(cfg, out_dir=args.out)
    world = synthworld.World()
    clf = _classifier_for(args, world)

    def progress(step, report):
        if step % 1000 == 0:
            _diag(f"  step {step} total={report.total:.4f}")

    results = evalsuite.run_ablation(cfg, clf=clf, n_pairs=args.pairs,
                                     eval_seed=args.seed, world=world, progress=progress)
    sys.stdout.write(evalsuite.ablation_text(results))
    _emit(table_csv=os.path.join(cfg.out_dir, "ablation.csv"))
    return 0


def cmd_inspect_checkpoint(args):
    with open(args.model, "rb") as f:
        manifest = model.read_manifest(f)
    for k, v in manifest.items():
        print(f"{k}={v}")
    return 0


def build_parser():
    p = _Parser(prog="didd", description="domain intersection / domain difference")
    sub = p.add_subparsers(dest="command", metavar="command", parser_class=_Parser)

    def add(name, fn, **kwargs):
        sp = sub.add_parser(name, **kwargs)
        sp.set_defaults(fn=fn)
        return sp

    sp = add("gen-data", cmd_gen_data, help="render a labeled synthetic dataset")
    sp.add_argument("--out", required=True)
    sp.add_argument("--n", type=int, default=100, help="samples per domain")
    sp.add_argument("--seed", type=int, default=0)

    sp = add("train", cmd_train, help="train a model")
    sp.add_argument("--config", help="key=value config file")
    sp.add_argument("--out", help="output directory (overrides config out_dir)")
    sp.add_argument("--seed", type=int, help="override the config seed")
    sp.add_argument("--resume", help="checkpoint to resume from")

    sp = add("translate", cmd_translate, help="guided translation of one image")
    sp.add_argument("--model", required=True)
    sp.add_argument("--src", required=True, help="source image (PPM)")
    sp.add_argument("--guide", required=True, help="guide image (PPM)")
    sp.add_argument("--direction", choices=("ab", "ba"), default="ab")
    sp.add_argument("--out", required=True)

    sp = add("interpolate", cmd_interpolate, help="latent interpolation grid")
    sp.add_argument("--model", required=True)
    sp.add_argument("--kind", choices=sorted(_KIND_BY_FLAG), required=True)
    sp.add_argument("--alpha-steps", type=int, default=5, help="grid columns")
    sp.add_argument("--beta-steps", type=int, default=1, help="grid rows")
    sp.add_argument("--out", required=True)
    sp.add_argument("inputs", nargs="+", help="input images (PPM)")

    sp = add("intersect", cmd_intersect, help="decode with both specific codes zeroed")
    sp.add_argument("--model", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("inputs", nargs="+", help="input images (PPM)")

    sp = add("union", cmd_union, help="combine common and specific codes from three images")
    sp.add_argument("--model", required=True)
    sp.add_argument("--common", required=True, help="common-code source (PPM)")
    sp.add_argument("--a-src", help="A-specific source (PPM), zero code if omitted")
    sp.add_argument("--b-src", help="B-specific source (PPM), zero code if omitted")
    sp.add_argument("--out", required=True)

    sp = add("eval-translate", cmd_eval_translate, help="classifier-scored translation accuracy")
    sp.add_argument("--model", required=True)
    sp.add_argument("--clf", help="classifier checkpoint; trained and saved here if missing")
    sp.add_argument("--pairs", type=int, default=512)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", help="write the result row as CSV")

    sp = add("eval-disentangle", cmd_eval_disentangle, help="theorem checks on a trained model")
    sp.add_argument("--model", required=True)
    sp.add_argument("--n", type=int, default=5000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", help="report CSV path (default: report.csv next to the model)")

    sp = add("ablate", cmd_ablate, help="train and score the four loss variants")
    sp.add_argument("--config", help="base config; out_dir is the sweep root")
    sp.add_argument("--out", help="sweep root directory (overrides config out_dir)")
    sp.add_argument("--clf", help="classifier checkpoint; trained and saved here if missing")
    sp.add_argument("--pairs", type=int, default=512)
    sp.add_argument("--seed", type=int, default=0)

    sp = add("inspect-checkpoint", cmd_inspect_checkpoint, help="print a checkpoint manifest")
    sp.add_argument("--model", required=True)

    return p


def main(argv):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "fn", None):
            parser.print_usage(sys.stderr)
            return 1
        return args.fn(args)
    except (UsageError, ConfigError) as e:
        print(f"didd: {e}", file=sys.stderr)
        if isinstance(e, UsageError):
            parser.print_usage(sys.stderr)
        return 1
    except Exception as e:
        print(f"didd: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


def entry():
    sys.exit(main(sys.argv[1:]))
