"""
Built-in model library.

Each entry pairs a builder with a default domain and a provenance line. Declared
constants are analytic; the comment next to each states where it comes from.
Users add their own models with ``register_model``.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from geometry.domains import Ball, Domain, Interval, domain_from_descriptor
from utils.exceptions import SimulationError, UnknownModelError
from .coefficients import TimePeriodicModel

logger = logging.getLogger(__name__)


@dataclass
class ModelLibraryEntry:
    name: str
    builder: Callable[..., TimePeriodicModel]
    default_domain: dict
    provenance: str = ''
    description: str = ''
    default_params: dict = field(default_factory=dict)

    def describe(self) -> dict:
        return {
            'name': self.name,
            'provenance': self.provenance,
            'description': self.description,
            'default_domain': self.default_domain,
            'default_params': self.default_params,
        }


MODEL_LIBRARY: dict[str, ModelLibraryEntry] = {}


def register_model(name: str, *, default_domain: dict, provenance: str = '', description: str = '',
                   default_params: Optional[dict] = None):
    """Add a builder ``builder(domain, **params) -> TimePeriodicModel`` to the library"""
    def decorator(builder):
        if name in MODEL_LIBRARY:
            logger.warning('Model %s is registered twice; the later builder wins', name)
        MODEL_LIBRARY[name] = ModelLibraryEntry(
            name=name,
            builder=builder,
            default_domain=default_domain,
            provenance=provenance,
            description=description,
            default_params=dict(default_params or {}),
        )
        return builder
    return decorator


def get_entry(name: str) -> ModelLibraryEntry:
    try:
        return MODEL_LIBRARY[name]
    except KeyError:
        raise UnknownModelError(f'Unknown model: {name}', details={'available': sorted(MODEL_LIBRARY)})


def list_models() -> list[ModelLibraryEntry]:
    return [MODEL_LIBRARY[name] for name in sorted(MODEL_LIBRARY)]


def build_model(name: str, params: Optional[dict] = None, domain: Optional[Domain] = None,
                declared: Optional[dict] = None) -> tuple[TimePeriodicModel, Domain]:
    """Instantiate a library model on its default domain (or on ``domain``).

    ``declared`` overrides the shipped constants {k0, c0, kappa_max, period}.
    """
    entry = get_entry(name)
    domain = domain if domain is not None else domain_from_descriptor(entry.default_domain)
    kwargs = {**entry.default_params, **(params or {})}
    declared = dict(declared or {})
    if 'period' in declared:
        kwargs['period'] = declared.pop('period')
    try:
        model = entry.builder(domain, **kwargs)
    except TypeError as exc:
        raise SimulationError(f'Invalid parameters for model {name}: {exc}', code='invalid_model',
                              details={'params': kwargs})
    if model.dim != domain.dim:
        raise SimulationError(
            f'Model {name} has dimension {model.dim} but the domain has dimension {domain.dim}.',
            code='dimension_mismatch',
        )
    model.name = name
    model.provenance = entry.provenance
    for key, attr in (('k0', 'declared_k0'), ('c0', 'declared_c0'), ('kappa_max', 'declared_kappa_max')):
        if key in declared and declared[key] is not None:
            setattr(model, attr, float(declared[key]))
    return model, domain


# -- library models ------------------------------------------------------------


class BrownianModel(TimePeriodicModel):
    """b = 0, sigma = I, kappa = 0"""


class SoftKillBrownianModel(TimePeriodicModel):
    """Brownian motion killed at a spatially constant rate"""

    def __init__(self, dim, rate, variant='constant', period=1.0):
        if variant not in ('constant', 'periodic'):
            raise SimulationError(f'Unknown soft-kill variant: {variant}', code='invalid_model')
        # kappa <= rate in both variants
        super().__init__(dim, period=period, declared_k0=0.0, declared_c0=1.0, declared_kappa_max=rate)
        self.rate = float(rate)
        self.variant = variant

    def kill_rate(self, t, X):
        if self.variant == 'constant':
            value = self.rate
        else:
            value = self.rate * (1.0 + np.cos(self.phase(t))) / 2.0
        return np.full(X.shape[0], value)


class DistanceScaledDiffusion(TimePeriodicModel):
    """sigma = (1 + phi_D(x)) I, more agitated towards the center"""

    def __init__(self, domain, period=1.0):
        d = domain.dim
        # sigma >= I; ||(phi(x) - phi(y)) I||_F <= sqrt(d) |x - y| since phi_D is 1-Lipschitz
        super().__init__(d, period=period, declared_k0=np.sqrt(d), declared_c0=1.0)
        self.domain = domain

    def diffusion(self, t, X):
        scale = 1.0 + self.domain.phi(X)
        return scale[:, None, None] * np.eye(self.dim)


class DistanceDrift(TimePeriodicModel):
    """b = phi_D(x) x, sigma = I; the drift vanishes on the boundary"""

    def __init__(self, domain, period=1.0):
        lower, upper = domain.bounding_box()
        reach = float(np.max(np.maximum(np.abs(lower), np.abs(upper))) * np.sqrt(domain.dim))
        # |phi(x) x - phi(y) y| <= (|x| + phi(y)) |x - y| <= (sup|x| + inradius) |x - y|
        super().__init__(domain.dim, period=period, declared_k0=reach + domain.inradius, declared_c0=1.0)
        self.domain = domain

    def drift(self, t, X):
        return self.domain.phi(X)[:, None] * X


class RotatingDrift(TimePeriodicModel):
    """b = R_t = r (cos 2 pi t / period, sin 2 pi t / period), sigma = I"""

    def __init__(self, dim, radius=0.5, period=1.0):
        # constant in space, |sigma y| = |y|
        super().__init__(dim, period=period, declared_k0=0.0, declared_c0=1.0)
        self.radius = float(radius)

    def drift(self, t, X):
        angle = self.phase(t)
        vector = np.zeros(self.dim)
        vector[0] = self.radius * np.cos(angle)
        if self.dim > 1:
            vector[1] = self.radius * np.sin(angle)
        return np.broadcast_to(vector, X.shape).copy()


class LipschitzScaledDiffusion(TimePeriodicModel):
    """sigma = (1 + h(x) phi_D(x)) I with h(x) = (1 + sin x_1) / 4 in [0, 1/2]"""

    def __init__(self, domain, period=1.0):
        d = domain.dim
        # |h phi(x) - h phi(y)| <= (Lip(h) inradius + sup h) |x - y| = (inradius / 4 + 1 / 2) |x - y|
        super().__init__(d, period=period, declared_k0=np.sqrt(d) * (domain.inradius / 4 + 0.5), declared_c0=1.0)
        self.domain = domain

    @staticmethod
    def h(X):
        return (1.0 + np.sin(X[:, 0])) / 4.0

    def diffusion(self, t, X):
        scale = 1.0 + self.h(X) * self.domain.phi(X)
        return scale[:, None, None] * np.eye(self.dim)


UNIT_INTERVAL = Interval(0.0, 1.0).descriptor()
UNIT_DISC = Ball([0.0, 0.0], 1.0).descriptor()


@register_model(
    'brownian',
    default_domain=UNIT_INTERVAL,
    provenance='Standard Brownian motion killed at the boundary.',
    description='b = 0, sigma = I, kappa = 0 on any domain.',
)
def build_brownian(domain, period=1.0):
    return BrownianModel(domain.dim, period=period)


@register_model(
    'brownian_softkill',
    default_domain=UNIT_INTERVAL,
    provenance='Constant (in space) killing rate; time-periodic variant kappa = c (1 + cos 2 pi t / period) / 2.',
    description='Brownian motion with soft killing at rate c, constant or time-periodic.',
    default_params={'rate': 1.0, 'variant': 'constant'},
)
def build_brownian_softkill(domain, rate=1.0, variant='constant', period=1.0):
    return SoftKillBrownianModel(domain.dim, rate, variant=variant, period=period)


@register_model(
    'remark1_1',
    default_domain=UNIT_DISC,
    provenance='Distance-scaled diffusion: sigma(t,x) = (1 + phi_D(x)) I_d on the unit ball, b = 0.',
    description='Time-homogeneous diffusion whose variance grows towards the center; sigma is not C^1 in D.',
)
def build_remark1_1(domain, period=1.0):
    return DistanceScaledDiffusion(domain, period=period)


@register_model(
    'remark1_2',
    default_domain=UNIT_DISC,
    provenance='Distance drift: b(t,x) = phi_D(x) x, sigma = I on the unit disc of R^2.',
    description='Drift that is not C^1 in D and vanishes at the boundary.',
)
def build_remark1_2(domain, period=1.0):
    return DistanceDrift(domain, period=period)


@register_model(
    'remark1_3',
    default_domain=UNIT_DISC,
    provenance='Rotating drift: b(t,x) = R_t, a time-periodic vector, sigma = I on the unit disc.',
    description='Time-periodic drift R_t = r (cos 2 pi t / period, sin 2 pi t / period); genuinely time-inhomogeneous.',
    default_params={'radius': 0.5},
)
def build_remark1_3(domain, radius=0.5, period=1.0):
    return RotatingDrift(domain.dim, radius=radius, period=period)


@register_model(
    'remark1_4',
    default_domain=UNIT_DISC,
    provenance='Lipschitz-only diffusion: sigma(t,x) = (1 + h(x) phi_D(x)) I_d with h Lipschitz in [0, 1/2]; '
               'shipped instance h(x) = (1 + sin x_1) / 4.',
    description='Diffusion coefficient that is only Lipschitz in D.',
)
def build_remark1_4(domain, period=1.0):
    return LipschitzScaledDiffusion(domain, period=period)
