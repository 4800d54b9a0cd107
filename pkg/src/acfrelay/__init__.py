"""Adaptive relay maps for two-way PSK relaying over two accumulated channel uses."""

from .constellation import SignalSet, difference_set, make_signal_set
from .fadestates import FadeState, SingularFadeSet, classify, enumerate_singular_fades
from .latin import LatinSquare, MapRecord, load_map, save_map
from .mapgen import build_library, base_clustering, cartesian_product, rotate_map, transpose_map
from .direct import direct_map
from .metrics import cluster_min_distance, effective_min_distance, choose_map, quantize_plane, GridSpec
from .simulator import SimConfig, SimResult, run_simulation

__version__ = "0.1.0"

__all__ = [
    "SignalSet", "difference_set", "make_signal_set",
    "FadeState", "SingularFadeSet", "classify", "enumerate_singular_fades",
    "LatinSquare", "MapRecord", "load_map", "save_map",
    "build_library", "base_clustering", "cartesian_product", "rotate_map", "transpose_map",
    "direct_map",
    "cluster_min_distance", "effective_min_distance", "choose_map", "quantize_plane", "GridSpec",
    "SimConfig", "SimResult", "run_simulation",
]
