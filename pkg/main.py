import sys

from src.cli import main as cli_main
from src.utils.error_logger import ErrorLogger


def main():
    # Setup error logging first
    ErrorLogger.setup_logging()
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
