import argparse
import logging

import cv2
import numpy as np

from nusg.data import normalize, read_image, write_probability_png
from nusg.metrics import binarize
from nusg.model import build_model, load_model
from nusg.train import MIN_TIMED_RUNS, bench_inference, predict
from cli.app import Module, UsageError, argument, command
from cli.options import check_size, parse_arch

logger = logging.getLogger(__name__)


class InferModule(Module):
    @command(name="infer")
    @argument("--checkpoint", required=True, help="model checkpoint")
    @argument("--image", required=True, help="input image")
    @argument("--out", required=True, help="output PNG")
    @argument("--threshold", type=float, help="write a 0/255 mask at this probability instead of the map")
    @argument("--size", type=int, default=320, help="square network input size")
    def infer(self, args: argparse.Namespace) -> None:
        """
        Segments one image and writes the map at the source resolution.
        """

        check_size(args.size)
        if args.threshold is not None and not 0.0 <= args.threshold <= 1.0:
            raise UsageError(f"--threshold must be in [0, 1], got {args.threshold}")

        model = load_model(args.checkpoint)
        image = read_image(args.image)
        height, width = image.shape[:2]

        resized = cv2.resize(image, (args.size, args.size), interpolation=cv2.INTER_LINEAR)
        prob = predict(model, normalize(resized)[None])[0, 0]
        prob = cv2.resize(prob.astype(np.float32), (width, height), interpolation=cv2.INTER_LINEAR)

        if args.threshold is not None:
            prob = binarize(prob, args.threshold).astype(np.float32)

        path = write_probability_png(args.out, prob)
        logger.info(f"wrote {width}x{height} map to {path}")

    @command(name="bench")
    @argument("--checkpoint", help="model checkpoint")
    @argument("--arch", help="time a freshly initialized architecture instead")
    @argument("--runs", type=int, default=20, help=f"timed runs, at least {MIN_TIMED_RUNS}")
    @argument("--warmup", type=int, default=3, help="untimed runs first")
    @argument("--size", type=int, default=320, help="square input size")
    def bench(self, args: argparse.Namespace) -> None:
        """
        Times single-image inference and prints the median seconds per image.
        """

        if (args.checkpoint is None) == (args.arch is None):
            raise UsageError("give exactly one of --checkpoint and --arch")
        if args.runs < MIN_TIMED_RUNS:
            raise UsageError(f"--runs must be at least {MIN_TIMED_RUNS}, got {args.runs}")
        if args.warmup < 0:
            raise UsageError(f"--warmup must be non-negative, got {args.warmup}")
        check_size(args.size)

        if args.checkpoint is not None:
            model = load_model(args.checkpoint)
        else:
            model = build_model(parse_arch(args.arch))
        result = bench_inference(model, (1, 3, args.size, args.size), args.warmup, args.runs)
        print(f"{model.arch.value}: {result.seconds:.4f} s/image (median of {len(result.runs)} runs)")
        print(f"hardware: {result.hardware}")
