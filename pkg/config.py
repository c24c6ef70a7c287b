import getpass
import logging
import os

from dotenv import load_dotenv

load_dotenv()

_FALSE = ('0', 'false', 'no', 'off')


class Config:
    AUDIT_DB = os.getenv('NESTGRAPH_AUDIT_DB', 'audit_log.db')
    AUDIT_ENABLED = os.getenv('NESTGRAPH_AUDIT_ENABLED', 'true').strip().lower() not in _FALSE
    LOG_LEVEL = os.getenv('NESTGRAPH_LOG_LEVEL', 'INFO').strip().upper()
    DATA_DIR = os.getenv('NESTGRAPH_DATA_DIR', 'data')
    USER_ID = os.getenv('NESTGRAPH_USER_ID')

    @classmethod
    def user_id(cls) -> str:
        if cls.USER_ID:
            return cls.USER_ID
        try:
            return getpass.getuser()
        except Exception:
            return 'unknown'

    @classmethod
    def validate_config(cls):
        from nestgraph.core.exceptions import ValidationError

        if not isinstance(logging.getLevelName(cls.LOG_LEVEL), int):
            raise ValidationError(f"Unknown log level {cls.LOG_LEVEL!r}", field='NESTGRAPH_LOG_LEVEL')
        if cls.AUDIT_ENABLED and not cls.AUDIT_DB:
            raise ValidationError("NESTGRAPH_AUDIT_DB is empty while auditing is enabled",
                                  field='NESTGRAPH_AUDIT_DB')
        return True

    @classmethod
    def configure_logging(cls):
        cls.validate_config()
        logging.basicConfig(
            level=getattr(logging, cls.LOG_LEVEL),
            format='%(asctime)s %(levelname)s %(name)s: %(message)s',
        )
