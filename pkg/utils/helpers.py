"""
Utility functions and helpers shared by the simulation apps
"""
import math
import os
from typing import Any, Optional

from django.conf import settings


def simulation_setting(key: str, default: Any = None) -> Any:
    """Read one entry of SIMULATION_SETTINGS, falling back to default"""
    if not settings.configured and not os.environ.get('DJANGO_SETTINGS_MODULE'):
        return default
    return getattr(settings, 'SIMULATION_SETTINGS', {}).get(key, default)


def safe_divide(a: float, b: float, default: float = 0.0) -> float:
    """Safe division that returns default value if divisor is zero"""
    try:
        return a / b if b != 0 else default
    except (ZeroDivisionError, TypeError):
        return default


def binomial_stderr(successes: int, trials: int) -> float:
    """Standard error of a Monte-Carlo proportion"""
    if trials <= 0:
        return 0.0
    p = successes / trials
    return math.sqrt(max(p * (1.0 - p), 0.0) / trials)


def format_duration(seconds: float) -> str:
    """Format elapsed wall time to human readable format"""
    if seconds < 1:
        return f"{seconds * 1000:.0f} ms"
    elif seconds < 60:
        return f"{seconds:.1f} s"
    else:
        return f"{int(seconds // 60)} min {seconds % 60:.0f} s"


def to_builtin(value: Any) -> Any:
    """Convert numpy scalars/arrays (recursively) into JSON-friendly builtins"""
    if hasattr(value, 'tolist'):
        return to_builtin(value.tolist())
    if isinstance(value, dict):
        return {str(k): to_builtin(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_builtin(v) for v in value]
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def create_success_response(message: str, data: Optional[dict] = None) -> dict:
    """Create standardized success response"""
    response = {'success': True, 'message': message}
    if data:
        response.update(to_builtin(data))
    return response


def create_error_response(message: str, error_code: Optional[str] = None, details: Optional[dict] = None) -> dict:
    """Create standardized error response"""
    response = {'success': False, 'error': message}
    if error_code:
        response['error_code'] = error_code
    if details:
        response['details'] = to_builtin(details)
    return response
