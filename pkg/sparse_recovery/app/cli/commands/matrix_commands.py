import argparse
import logging

from ...schemas.problem_schema import MatrixEnsemble, MatrixKind, SignalDistribution, SignalKind
from ...services.ensemble_service import derive_seed, export_instance, export_matrix_csv, fixed_matrix, make_instance
from ..options import add_out_dir, add_seed, add_snr, out_dir

logger = logging.getLogger(__name__)


def register(subparsers):
    parser = subparsers.add_parser(
        "gen-matrix",
        help="draw a sensing matrix and write it as CSV",
        description="Draws the same matrix a fixed-matrix run with master seed --seed uses.",
    )
    parser.add_argument("--kind", choices=[k.value for k in MatrixKind], default=MatrixKind.GAUSSIAN_REAL.value)
    parser.add_argument("-m", type=int, required=True, help="number of measurements (rows)")
    parser.add_argument("-n", type=int, required=True, help="signal length (columns)")
    parser.add_argument("--output", default="phi.csv", help="file name under --out-dir")
    parser.add_argument("--sparsity", type=int, default=None,
                        help="also export one instance y = phi x0 + w with this many nonzeros")
    parser.add_argument("--distribution", choices=[k.value for k in SignalKind],
                        default=SignalKind.SYMMETRIC_INTERVAL.value)
    add_snr(parser)
    add_seed(parser)
    add_out_dir(parser)
    parser.set_defaults(handler=gen_matrix_command)


def gen_matrix_command(args: argparse.Namespace) -> int:
    ensemble = MatrixEnsemble(kind=args.kind, m=args.m, n=args.n)
    directory = out_dir(args)
    phi = fixed_matrix(ensemble, args.seed)
    export_matrix_csv(phi, directory / args.output)
    print(directory / args.output)

    if args.sparsity is not None:
        dist = SignalDistribution(kind=args.distribution)
        seed = derive_seed(args.seed, args.snr, args.sparsity, 0)
        instance = make_instance(ensemble, dist, args.sparsity, args.snr, seed, phi=phi)
        sidecar = export_instance(instance, ensemble, dist, directory)
        logger.info(f"Exported instance s={args.sparsity}, snr={args.snr} with support "
                    f"{[i + 1 for i in instance.support]}")
        print(sidecar)
    return 0
