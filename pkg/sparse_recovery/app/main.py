import logging
import sys
from typing import Optional, Sequence

import pandas as pd
from pydantic import ValidationError

from .cli.cli import build_parser
from .core.exceptions import ConfigError, InvalidArgumentError, ModelFormatError, NumericFailureError
from .core.logging_config import setup_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    # Initialize logging
    setup_logging(args.log_level, log_dir=args.log_dir, to_file=not args.no_log_file)

    try:
        status = args.handler(args)
        return EXIT_OK if status is None else status
    except ConfigError as e:
        paths = f" (fields: {', '.join(e.field_paths)})" if e.field_paths else ""
        logger.error(f"Configuration error in {args.command}: {e}{paths}")
        return EXIT_CONFIG
    except (ValidationError, InvalidArgumentError) as e:
        logger.error(f"Invalid arguments to {args.command}: {e}")
        return EXIT_CONFIG
    except NumericFailureError as e:
        context = {k: v for k, v in (("support", e.support), ("iteration", e.iteration),
                                     ("epoch", e.epoch), ("batch", e.batch)) if v is not None}
        logger.error(f"Numeric failure in {args.command}: {e} {context}")
        return EXIT_NUMERIC
    except (ModelFormatError, OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        logger.error(f"I/O error in {args.command}: {e}")
        return EXIT_IO
    except Exception as e:
        logger.error(f"Unhandled exception in {args.command}: {str(e)}", exc_info=True)
        return 1


if __name__ == "__main__":
    sys.exit(main())
