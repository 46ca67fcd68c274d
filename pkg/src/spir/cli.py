"""Command line entry point: ``spir <command> [options]``.

Data goes to standard output, logs and the effective-config banner to
standard error.  Exit codes: 0 success, 1 usage or validation error,
2 I/O or network error, 3 internal error.
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys

from .centrality import METRICS, STRATEGIES, SupportSetConfig, retrieve
from .corpus import CONFIG_ENV, Corpus, load_config
from .evaluation import (
    MEASURES,
    run_baseline,
    run_sweep,
    sweep_to_csv,
    trial_seed,
)
from .exceptions import (
    CorpusError,
    ProtocolError,
    SpirError,
    UnknownBundleError,
)
from .protocol import (
    MAX_FRAME,
    alice_prepare_matrix,
    alice_resolve,
    bob_retrieve,
    request,
    serve,
)
from .sbe import DEFAULT_GAMMA, characterize, generate_params, load_params, save_params
from .text import TextConfig, document_matrix

DEFAULT_SEED = 2014

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_INTERNAL = 3

logger = logging.getLogger("spir")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _float_list(text):
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _add_seed(p):
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                   help=f"master seed (default {DEFAULT_SEED})")


def _add_text_opts(p):
    p.add_argument("--kp-count", type=int, default=None,
                   help="key phrases per document (default from config, 40)")
    p.add_argument("--strategy", choices=STRATEGIES, default="mean-threshold")
    p.add_argument("--k", type=int, default=1, help="support-set size for k-nearest")


def _add_size_opts(p):
    group = p.add_mutually_exclusive_group()
    group.add_argument("--n", type=int, default=None, help="passages per summary (default 3)")
    group.add_argument("--ratio", type=float, default=None, help="summary size as a fraction of passages")


def build_parser():
    parser = _Parser(prog="spir", description="Privacy-preserving important passage retrieval.")
    parser.add_argument("--config", default=None,
                        help=f"pipeline config file (default ${CONFIG_ENV})")
    parser.add_argument("--seed", type=int, default=DEFAULT_SEED,
                        help=f"master seed (default {DEFAULT_SEED})")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    parser.add_argument("-q", "--quiet", action="store_true", help="suppress the banner and info logs")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("genparams", help="write a secret embedding parameter file")
    _add_seed(p)
    p.add_argument("--dim", type=int, default=1024, help="input dimension L")
    p.add_argument("--bits", type=int, default=4096, help="hash length M")
    p.add_argument("--delta", type=float, default=1.0)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--out", required=True)

    for name, text in (("retrieve", "rank the passages of one document"),
                       ("client", "retrieve one document through a remote server")):
        p = sub.add_parser(name, help=text)
        _add_seed(p)
        p.add_argument("--corpus", required=True)
        p.add_argument("--doc", required=True)
        p.add_argument("--n", type=int, default=3)
        p.add_argument("--params", default=None, help="parameter file (hashed mode)")
        p.add_argument("--feature-hashing", action="store_true",
                       help="hash terms into the parameter dimension L")
        p.add_argument("--format", choices=("text", "csv"), default="text")
        _add_text_opts(p)
        if name == "retrieve":
            p.add_argument("--metric", choices=METRICS, default="cosine")
        else:
            p.add_argument("--addr", default="127.0.0.1")
            p.add_argument("--port", type=int, required=True)
            p.add_argument("--timeout", type=float, default=30.0)

    p = sub.add_parser("serve", help="run the retrieval server")
    _add_seed(p)
    p.add_argument("--addr", default="127.0.0.1")
    p.add_argument("--port", type=int, default=0, help="0 picks a free port")
    p.add_argument("--max-frame", type=int, default=MAX_FRAME)
    p.add_argument("--no-echo", action="store_true", help="do not echo selected hashes")

    p = sub.add_parser("eval", help="plaintext baselines against reference summaries")
    _add_seed(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--metric", choices=("cosine", "euclidean", "both"), default="both")
    p.add_argument("--measure", choices=MEASURES, default="recall")
    _add_size_opts(p)
    _add_text_opts(p)

    p = sub.add_parser("sweep", help="hashed retrieval over leakage and bits-per-coefficient grids")
    _add_seed(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--leakages", type=_float_list, default=(0.05, 0.25, 0.5, 0.75, 0.95))
    p.add_argument("--bpcs", type=_float_list, default=(4.0, 8.0, 16.0))
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--features", type=int, default=None,
                   help="feature-hash terms into this many rows and share parameters per trial")
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=DEFAULT_GAMMA)
    p.add_argument("--delta-scale", type=float, default=1.0)
    p.add_argument("--measure", choices=MEASURES, default="recall")
    _add_size_opts(p)
    _add_text_opts(p)

    p = sub.add_parser("characterize", help="(d_E, d_H) samples for random vector pairs")
    _add_seed(p)
    p.add_argument("--dim", type=int, default=1024)
    p.add_argument("--bits", type=int, default=4096)
    p.add_argument("--pairs", type=int, default=2000)
    p.add_argument("--delta", type=float, default=1.0)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--max-distance", type=float, default=None, help="default 4 delta / sigma")
    p.add_argument("--duplicates", type=int, default=0, help="extra pairs of identical vectors")
    return parser


def _banner(args):
    items = [f"{k}={v!r}" for k, v in sorted(vars(args).items()) if k not in ("verbose", "quiet")]
    print("# spir " + " ".join(items), file=sys.stderr)


def _text_config(args):
    config = load_config(args.config)
    kp = getattr(args, "kp_count", None)
    if kp is not None:
        if kp < 0:
            raise UsageError("--kp-count must be nonnegative")
        config = TextConfig(config.weighting, config.normalize, config.segmentation,
                            config.stopwords, kp)
    return config


def _support_config(args):
    return SupportSetConfig(args.strategy, args.k)


def _doc_matrix(args, n_features=None):
    corpus = Corpus(args.corpus)
    if args.doc not in corpus.ids:
        raise CorpusError(f"unknown document {args.doc!r} in {args.corpus}")
    return document_matrix(corpus.document(args.doc), _text_config(args),
                           corpus.key_phrases(args.doc), n_features=n_features)


def _emit_ranking(ranked, passages, fmt, out):
    if fmt == "csv":
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(("rank", "index", "score", "passage"))
        for r, ((i, s), text) in enumerate(zip(ranked, passages), 1):
            writer.writerow((r, i, s, text))
    else:
        for r, ((i, s), text) in enumerate(zip(ranked, passages), 1):
            out.write(f"{r}\t{s}\t{i}\t{text}\n")


def _hashed_inputs(args):
    if args.params is None:
        raise UsageError("hashed retrieval needs --params")
    params = load_params(args.params)
    matrix = _doc_matrix(args, params.L if args.feature_hashing else None)
    return params, matrix


def cmd_genparams(args, out):
    params = generate_params(args.seed, args.dim, args.bits, args.delta, args.sigma)
    save_params(params, args.out)
    logger.info("wrote %s (L=%d M=%d)", args.out, params.L, params.M)


def cmd_retrieve(args, out):
    if args.metric == "hamming":
        params, matrix = _hashed_inputs(args)
        bundle, mapping = alice_prepare_matrix(matrix, params, args.n, _support_config(args), args.doc)
        result = bob_retrieve(bundle, echo=False)
        _emit_ranking(result.ranked, alice_resolve(result, mapping), args.format, out)
        return
    if args.params is not None or args.feature_hashing:
        raise UsageError(f"--params and --feature-hashing only apply to --metric hamming, not {args.metric}")
    matrix = _doc_matrix(args)
    ranked = retrieve(matrix.weights, args.n, args.metric, _support_config(args),
                      num_passages=matrix.n_passages)
    _emit_ranking(ranked.ranked, [matrix.passages[i].text for i in ranked.indices], args.format, out)


def cmd_client(args, out):
    params, matrix = _hashed_inputs(args)
    bundle, mapping = alice_prepare_matrix(matrix, params, args.n, _support_config(args), args.doc)
    logger.info("bundle=%s columns=%d", bundle.bundle_id.hex(), len(bundle.hashes))
    result = request(args.addr, args.port, bundle, timeout=args.timeout)
    _emit_ranking(result.ranked, alice_resolve(result, mapping), args.format, out)


def cmd_serve(args, out):
    server = serve(args.addr, args.port, max_frame=args.max_frame, echo=not args.no_echo)
    host, port = server.server_address[:2]
    print(f"listening on {host}:{port}", file=sys.stderr, flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()


def cmd_eval(args, out):
    metrics = ("cosine", "euclidean") if args.metric == "both" else (args.metric,)
    n = 3 if args.n is None else args.n
    results = [run_baseline(args.corpus, m, n=n, ratio=args.ratio,
                            config=_support_config(args), text_config=_text_config(args),
                            measure=args.measure)
               for m in metrics]
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(("doc",) + metrics)
    for doc_id in results[0].per_document:
        writer.writerow((doc_id,) + tuple(f"{r.per_document[doc_id]:.3f}" for r in results))
    writer.writerow(("mean",) + tuple(f"{r.mean:.3f}" for r in results))


def cmd_sweep(args, out):
    n = 3 if args.n is None else args.n
    rows = run_sweep(args.corpus, args.leakages, args.bpcs, trials=args.trials, seed=args.seed,
                     n=n, ratio=args.ratio, config=_support_config(args),
                     text_config=_text_config(args), sigma=args.sigma, gamma=args.gamma,
                     measure=args.measure, n_features=args.features,
                     delta_scale=args.delta_scale)
    out.write(sweep_to_csv(rows))


def cmd_characterize(args, out):
    params = generate_params(args.seed, args.dim, args.bits, args.delta, args.sigma)
    samples = characterize(params, args.pairs, pair_seed=trial_seed(args.seed, 0),
                           max_distance=args.max_distance, duplicate_pairs=args.duplicates)
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(("d_e", "d_h"))
    for d_e, d_h in samples:
        writer.writerow((repr(float(d_e)), repr(float(d_h))))


COMMANDS = {
    "genparams": cmd_genparams,
    "retrieve": cmd_retrieve,
    "client": cmd_client,
    "serve": cmd_serve,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "characterize": cmd_characterize,
}


def _exit_code(exc):
    if isinstance(exc, (UsageError, CorpusError)):
        return EXIT_USAGE
    if isinstance(exc, (ProtocolError, OSError)):
        return EXIT_IO
    if isinstance(exc, UnknownBundleError):
        return EXIT_INTERNAL
    if isinstance(exc, (SpirError, ValueError, TypeError)):
        return EXIT_USAGE
    return EXIT_INTERNAL


def main(argv=None, stdout=None):
    stdout = sys.stdout if stdout is None else stdout
    args = build_parser().parse_args(argv)
    if args.config is None:
        args.config = os.environ.get(CONFIG_ENV) or None
    level = logging.WARNING if args.quiet else (logging.DEBUG if args.verbose else logging.INFO)
    logging.basicConfig(level=level, stream=sys.stderr, format="%(asctime)s %(name)s %(message)s")
    logging.getLogger("spir").setLevel(level)
    if not args.quiet:
        _banner(args)
    buf = io.StringIO()
    try:
        COMMANDS[args.command](args, buf)
    except Exception as exc:  # noqa: BLE001 - mapped to exit codes
        code = _exit_code(exc)
        if code == EXIT_INTERNAL:
            logger.exception("internal error")
        print(f"spir {args.command}: error: {exc}", file=sys.stderr)
        return code
    stdout.write(buf.getvalue())
    stdout.flush()
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
