"""Second-order feature pooling and power normalization.

Subpackages are imported lazily so the command-line entry point can pin
BLAS thread counts before numpy loads. Import submodules directly
(``from powerpool import matcore``) or pull common names off the package
root (``powerpool.sym_eig``); both work.
"""

__version__ = "0.1.0"

_SUBMODULES = (
    "matcore",
    "sop",
    "elempn",
    "specpn",
    "fastpn",
    "hdp",
    "gradcheck",
    "benchcli",
)

# name -> submodule that defines it, resolved on first attribute access
_EXPORTS = {
    "PoolDomainError": "matcore",
    "MatrixFormatError": "matcore",
    "ConvergenceError": "matcore",
    "SpectralDecomp": "matcore",
    "sym": "matcore",
    "sym_eig": "matcore",
    "lambert_w": "matcore",
    "random_spd": "matcore",
    "rng_stream": "matcore",
    "PNConfig": "elempn",
    "pn_forward": "elempn",
    "pn_backward": "elempn",
    "SpectralGapConfig": "specpn",
    "spn_forward": "specpn",
    "spn_backward": "specpn",
    "fast_maxexp_forward": "fastpn",
    "fast_maxexp_backward": "fastpn",
    "newton_schulz_sqrt": "fastpn",
    "hdp_apply": "hdp",
    "fahdp_apply": "hdp",
    "autocorrelation": "sop",
}


def __getattr__(name):
    import importlib

    if name in _SUBMODULES:
        return importlib.import_module(f".{name}", __name__)
    owner = _EXPORTS.get(name)
    if owner is not None:
        module = importlib.import_module(f".{owner}", __name__)
        value = getattr(module, name)
        globals()[name] = value
        return value
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


def __dir__():
    return sorted(set(globals()) | set(_SUBMODULES) | set(_EXPORTS))
