import sys
import warnings

# pandas emits this when pyarrow is absent; nothing here uses pyarrow
warnings.filterwarnings("ignore", message=".*pyarrow.*", category=DeprecationWarning)


def main() -> int:
    from amortprox.harness.cli import main as cli_main

    try:
        return cli_main()
    except KeyboardInterrupt:
        from amortprox.utils.apo_logger import logger

        logger.info("Stopping...")
        return 130


if __name__ == "__main__":
    sys.exit(main())
