"""Batched telemetry collection with truncated Fourier spectra and spectral GRU forecasting."""

from .collection import CollectionConfig, CommunicationReport, run_simulation
from .spectral import (
    EnergyProfile,
    FourierTruncator,
    Spectrum,
    TruncatedSpectrum,
    dft,
    energy_profile,
    idft,
    reconstruct,
    truncate,
    truncate_by_energy,
    truncate_by_rmse,
)
from .traces import SynthConfig, Trace, WindowConfig, build_windows, load_trace, synth_trace

__version__ = "0.1.0"
