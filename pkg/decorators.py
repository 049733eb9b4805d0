import logging
from functools import wraps

import click
from pydantic import ValidationError

from behavior import BehaviorError
from experiments import ExperimentError
from forecast import ForecastError
from grid_data import GridDataError
from scheduler import SchedulerError
from sim import SimError

logger = logging.getLogger(__name__)

DOMAIN_ERRORS = (GridDataError, ForecastError, SchedulerError, BehaviorError, SimError, ExperimentError)


def handle_errors(f):
    """Decorator to turn domain errors into readable CLI failures."""
    @wraps(f)
    def decorated_function(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except ValidationError as e:
            logger.debug("Invalid configuration", exc_info=True)
            raise click.ClickException(f"invalid configuration: {e}")
        except DOMAIN_ERRORS as e:
            logger.debug("Command failed", exc_info=True)
            raise click.ClickException(f"{type(e).__name__}: {e}")
        except OSError as e:
            logger.debug("I/O failure", exc_info=True)
            raise click.ClickException(str(e))
    return decorated_function
