"""Behavioral simulator for a charge-domain in-memory-computing SRAM macro.

The package models the full signal chain (input DACs, capacitor multiply,
charge-sharing accumulation, charge-injection SAR conversion, digital
shift-add), compiles quantized CNNs onto the macro's slices, and runs the
characterization protocols (linearity, INL, error histograms, rms noise)
alongside end-to-end inference.
"""

from .adc import AdcCode, AdcParams, convert, ideal_quantize, measure_rms
from .analog import (InputVector, SliceBits, SliceVoltage, accumulate,
                     dac_convert, net_switching_error, slice_mac, slice_signal)
from .calibration import (CalibrationTable, calibrate, error_histogram,
                          fit_linear, fit_master_curve, inl_profile,
                          sweep_codes)
from .config import (AnalogParams, MacroGeometry, default_analog_params,
                     default_geometry, load_config, validate)
from .digital import (PartialSum, TreeConfig, accumulate_nibbles,
                      plane_count, sign_transform, supported_bitwidths,
                      tree_combine)
from .inference import (Engine, InvariantViolation, RunReport,
                        integer_reference, run_inference)
from .mapping import (LayerMapping, LayerSpec, NetworkMapping, encode_ternary,
                      encode_twos, map_layer, map_network, mapping_manifest,
                      storage_report)
from .model import (QuantizedLayer, QuantizedNetwork, load_idx_images,
                    load_idx_labels, load_model, save_idx_images,
                    save_idx_labels, save_model)
from .variation import VariationProfile, VariationSpec, sample_profile

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
