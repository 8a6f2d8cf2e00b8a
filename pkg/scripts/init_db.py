"""
Run-ledger maintenance script
Creates, drops, resets or verifies the training_runs / evaluation_logs tables
"""
import sys
from pathlib import Path

# Add project root to path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from src.config.logging_config import logger
from src.config.settings import settings
from src.models.database import Base, get_engine, verify_connection


def create_tables(url=None) -> bool:
    """Create the ledger tables"""
    try:
        logger.info("Creating ledger tables...")
        Base.metadata.create_all(bind=get_engine(url))
        logger.info("✓ Ledger tables created")
        return True
    except Exception as e:
        logger.error(f"✗ Failed to create tables: {str(e)}")
        return False


def drop_tables(url=None) -> bool:
    """Drop the ledger tables"""
    try:
        logger.info("Dropping ledger tables...")
        Base.metadata.drop_all(bind=get_engine(url))
        logger.info("✓ Ledger tables dropped")
        return True
    except Exception as e:
        logger.error(f"✗ Failed to drop tables: {str(e)}")
        return False


def reset_database(url=None) -> bool:
    logger.info("Resetting run ledger...")
    if drop_tables(url) and create_tables(url):
        logger.info("✓ Run ledger reset")
        return True
    logger.error("✗ Run ledger reset failed")
    return False


def verify(url=None) -> bool:
    try:
        verify_connection(url)
        logger.info("✓ Ledger connection verified")
        return True
    except Exception as e:
        logger.error(f"✗ Ledger connection failed: {str(e)}")
        return False


def main(argv=None):
    import argparse

    parser = argparse.ArgumentParser(description="Run-ledger maintenance utility")
    parser.add_argument('action', choices=['create', 'drop', 'reset', 'verify'], help='Action to perform')
    parser.add_argument('--url', default=None, help='Database URL (defaults to settings.database_url)')
    parser.add_argument('--yes', action='store_true', help='Skip the confirmation prompt for drop/reset')
    args = parser.parse_args(argv)

    url = args.url or settings.database_url
    logger.info("=" * 80)
    logger.info("Run Ledger Utility")
    logger.info("=" * 80)
    logger.info(f"Database URL: {url}")
    logger.info("=" * 80)

    if args.action in ('drop', 'reset') and not args.yes:
        confirm = input(f"Are you sure you want to {args.action} the run ledger? (yes/no): ")
        if confirm.lower() != 'yes':
            logger.info("Operation cancelled")
            return 0

    actions = {'create': create_tables, 'drop': drop_tables, 'reset': reset_database, 'verify': verify}
    return 0 if actions[args.action](url) else 1


if __name__ == "__main__":
    sys.exit(main())
