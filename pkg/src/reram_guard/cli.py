"""Command line entry point: ``reram-guard {train,run,hist}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import campaign
from .model_io import FormatError, load_mnist_split, load_model, save_model
from .nn.layers import exact_forward
from .nn.mapping import accuracy
from .nn.train import train_reference_mlp
from .xbar import DeviceParams

log = logging.getLogger("reram_guard")


def _floats(text):
    return [float(t) for t in text.split(",") if t.strip()]


def _ints(text):
    return [int(t) for t in text.split(",") if t.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="reram-guard", description="ReRAM crossbar fault campaigns with k-LSB column checking.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train the reference 784-64-10 MLP on MNIST")
    t.add_argument("--mnist-dir", help="directory with the IDX files (default: bundled data/mnist)")
    t.add_argument("--out", required=True, help="model directory to write")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--epochs", type=int, default=5)
    t.add_argument("--hidden", type=int, default=64)

    r = sub.add_parser("run", help="run a fault-injection campaign")
    r.add_argument("--config", help="JSON config file; flags override its values")
    r.add_argument("--seed", type=int, required=True, help="master seed")
    r.add_argument("--model", dest="model_dir")
    r.add_argument("--images", dest="images_path")
    r.add_argument("--labels", dest="labels_path")
    r.add_argument("--subset", type=int)
    r.add_argument("--full", action="store_true", help="evaluate all 10000 test images")
    r.add_argument("--xbar-size", type=int)
    r.add_argument("--adc-bits", type=int)
    r.add_argument("--full-scale-fraction", type=float)
    r.add_argument("--v-max", type=float)
    r.add_argument("--g-on", type=float)
    r.add_argument("--g-off", type=float)
    r.add_argument("--fault-model", help="sa0, sa1, soft-redraw or soft-gaussian[:sigma]")
    r.add_argument("--rates", type=_floats, help="comma separated, e.g. 0,0.05,0.1")
    r.add_argument("--ks", type=_ints, help="comma separated, e.g. 1,2,3,4")
    r.add_argument("--trials", type=int)
    r.add_argument("--guard", dest="guard", action="store_true", default=None)
    r.add_argument("--no-guard", dest="guard", action="store_false")
    r.add_argument("--check-interval", type=int, help="test cycle every Nth MVM (1 = every MVM)")
    r.add_argument("--retry-budget", type=int)
    r.add_argument("--workers", type=int)
    r.add_argument("--no-timing", dest="record_timing", action="store_false", default=None,
                   help="write 0 in the seconds column so reruns are byte-identical")
    r.add_argument("--out", dest="output", help="results path; writes <out>.csv and <out>.json")

    h = sub.add_parser("hist", help="histogram ADC codes of fault-free crossbar inference")
    h.add_argument("--model", required=True)
    h.add_argument("--mnist-dir")
    h.add_argument("--samples", type=int, default=100)
    h.add_argument("--xbar-size", type=int, default=128)
    h.add_argument("--adc-bits", type=int, default=8)
    h.add_argument("--v-max", type=float, default=0.3)
    h.add_argument("--out", help="JSON file; printed to stdout if omitted")
    return p


def cmd_train(args) -> int:
    train = load_mnist_split(args.mnist_dir, "train")
    test = load_mnist_split(args.mnist_dir, "test")
    model = train_reference_mlp(train.images, train.labels, hidden=args.hidden, seed=args.seed,
                                epochs=args.epochs, log=log.info)
    acc = accuracy(exact_forward(model, test.images), test.labels)
    save_model(model, args.out)
    print(f"saved {args.out} (test accuracy {acc:.4f})")
    return 0


def cmd_run(args) -> int:
    overrides = {
        name: getattr(args, name)
        for name in ("seed", "model_dir", "images_path", "labels_path", "subset", "xbar_size", "adc_bits",
                     "full_scale_fraction", "v_max", "g_on", "g_off", "fault_model", "rates", "ks",
                     "trials", "guard", "check_interval", "retry_budget", "workers", "record_timing",
                     "output")
    }
    if args.full:
        overrides["subset"] = 10000
    if args.config:
        cfg = campaign.CampaignConfig.from_file(args.config, **overrides)
    else:
        cfg = campaign.CampaignConfig(**{k: v for k, v in overrides.items() if v is not None})
    if not cfg.output:
        raise ValueError("no output path: pass --out or set 'output' in the config")
    result = campaign.run_campaign(cfg, log=log.info)
    csv_path, json_path = campaign.emit_results(result, cfg.output)
    print(f"wrote {csv_path} and {json_path}")
    return 0


def cmd_hist(args) -> int:
    model = load_model(args.model)
    data = load_mnist_split(args.mnist_dir, "test")
    device = DeviceParams(v_max=args.v_max)
    hist = campaign.adc_histogram(model, data.images, args.samples, device, args.xbar_size, args.adc_bits)
    text = json.dumps(hist.to_dict(), indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out} (pooled median code {hist.median()})")
    else:
        sys.stdout.write(text)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    handler = {"train": cmd_train, "run": cmd_run, "hist": cmd_hist}[args.command]
    try:
        return handler(args)
    except (ValueError, FormatError, OSError, KeyError) as e:
        print(f"reram-guard {args.command}: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
