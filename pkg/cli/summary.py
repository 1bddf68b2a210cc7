import argparse

from nusg.checks import TOLERANCE, passed, run_suite
from nusg.model import FLOP_CONVENTION, Arch, build_model, count_flops, count_params
from cli.app import EXIT_FAILURE, EXIT_OK, Module, UsageError, argument, command
from cli.options import check_size, parse_arch


class SummaryModule(Module):
    @command(name="summary")
    @argument("--arch", required=True, help=f"one of {', '.join(a.value for a in Arch)}")
    @argument("--size", type=int, default=320, help="square input size for the operation count")
    def summary(self, args: argparse.Namespace) -> None:
        """
        Prints the parameter and operation budget of an architecture.
        """

        arch = parse_arch(args.arch)
        check_size(args.size)

        model = build_model(arch, init=False)
        params = count_params(model)
        flops = count_flops(model, (1, 3, args.size, args.size))

        print(f"arch: {arch.value}")
        print(f"params: {params.count} ({params.megabytes:.2f} MB)")
        print(f"flops @ {args.size}x{args.size}: {flops.gflops:.2f} G")
        print(f"macs @ {args.size}x{args.size}: {flops.gmacs:.2f} G")
        print(f"convention: {FLOP_CONVENTION}")

    @command(name="gradcheck")
    @argument("--case", action="append", dest="cases", help="run only this case (repeatable)")
    @argument("--seed", type=int, default=0)
    def gradcheck(self, args: argparse.Namespace) -> int:
        """
        Runs the finite-difference gradient suite.
        """

        try:
            results = run_suite(args.cases, args.seed)
        except KeyError as e:
            raise UsageError(e.args[0])

        width = max(len(name) for name in results)
        for name, error in results.items():
            status = "ok" if error < TOLERANCE else "FAIL"
            print(f"{name.ljust(width)}  {error:.3e}  {status}")

        return EXIT_OK if passed(results) else EXIT_FAILURE
