"""Weight encodings and layer placement onto the macro array.

Placement follows three rules. Bit planes of one weight go to neighboring
slices (same column). Within a filter, the same bit of different weights
shares a row; different filters take different slices, and a filter longer
than the 128-lane row is split column-major into multiple row-groups whose
partials are added digitally. Each row split is placed like a filter of its
own: the split index rotates the unit assignment within the group, so the
partials of one long filter land on different converters and per-slice gain
mismatch averages out instead of accumulating coherently. When the slice
set cannot hold all (filter, plane) units, the layer wraps onto a new row
in every slice, and past eight rows it spills onto another macro.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import MacroGeometry, default_geometry
from .digital import supported_bitwidths

TERNARY_BITWIDTHS = (2, 3, 5)
TWOS_BITWIDTHS = (1, 2, 4, 8)


class MappingError(ValueError):
    pass


def encode_twos(w: int, bits: int) -> list[int]:
    """Two's-complement bit planes, MSB first; the MSB plane is the
    negative-weighted one."""
    lo, hi = -(1 << (bits - 1)), (1 << (bits - 1)) - 1
    if not lo <= w <= hi:
        raise MappingError(f"{w} does not fit in {bits} bits")
    return [(w >> p) & 1 for p in range(bits - 1, -1, -1)]


def decode_twos(planes) -> int:
    planes = list(planes)
    bits = len(planes)
    value = sum(b << (bits - 1 - i) for i, b in enumerate(planes))
    if planes[0]:
        value -= 1 << bits
    return value


def encode_ternary(w: int) -> tuple[int, int]:
    """Single trit as a (minus cell, plus cell) pair across a slice pair."""
    if w not in (-1, 0, 1):
        raise MappingError(f"not a trit: {w}")
    return (int(w < 0), int(w > 0))


def decode_ternary(pair) -> int:
    minus, plus = pair
    if minus and plus:
        raise MappingError("both cells of a trit pair set")
    return int(plus) - int(minus)


def encode_ternary_planes(w: int, bits: int) -> list[tuple[int, int]]:
    """Multi-trit value as bits-1 cell pairs, most significant trit first.
    Magnitude digits are binary; the sign rides on every nonzero digit."""
    limit = (1 << (bits - 1)) - 1
    if not -limit <= w <= limit:
        raise MappingError(f"{w} out of ternary range for {bits} bits")
    sign = 1 if w >= 0 else -1
    return [encode_ternary(sign * ((abs(w) >> p) & 1))
            for p in range(bits - 2, -1, -1)]


def decode_ternary_planes(pairs) -> int:
    pairs = list(pairs)
    bits = len(pairs) + 1
    return sum(decode_ternary(p) << (bits - 2 - i) for i, p in enumerate(pairs))


def nibble_passes(input_bits: int) -> int:
    if not 1 <= input_bits <= 8:
        raise MappingError(f"unsupported input bitwidth: {input_bits}")
    return 1 if input_bits <= 4 else 2


@dataclass(frozen=True)
class LayerSpec:
    name: str
    kind: str  # conv | fc
    in_channels: int
    out_channels: int
    kernel: int = 0  # R of an RxR kernel; 0 for fc
    input_bits: int = 4
    weight_bits: int = 2
    encoding: str = "ternary"  # twos | ternary
    adc_mode: str = "differential"  # single | differential
    input_height: int = 0
    input_width: int = 0
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        if self.kind not in ("conv", "fc"):
            raise MappingError(f"unknown layer kind: {self.kind}")
        if self.encoding == "twos":
            if self.weight_bits not in TWOS_BITWIDTHS:
                raise MappingError(
                    f"no tree level supports {self.weight_bits}-bit 2's weights")
            if self.adc_mode != "single":
                raise MappingError("2's-complement layers run single-ended")
        elif self.encoding == "ternary":
            if self.weight_bits not in TERNARY_BITWIDTHS:
                raise MappingError(
                    f"no tree level supports {self.weight_bits}-bit ternary weights")
            if self.adc_mode != "differential":
                raise MappingError("ternary encoding requires differential mode")
        else:
            raise MappingError(f"unknown encoding: {self.encoding}")
        nibble_passes(self.input_bits)
        if self.kind == "conv":
            if self.kernel < 1 or self.input_height < 1 or self.input_width < 1:
                raise MappingError("conv layers need kernel and input dims")
            if self.stride < 1:
                raise MappingError("stride must be positive")
        if self.in_channels < 1 or self.out_channels < 1:
            raise MappingError("channel counts must be positive")

    @property
    def filter_length(self) -> int:
        if self.kind == "conv":
            return self.kernel * self.kernel * self.in_channels
        return self.in_channels

    @property
    def planes(self) -> int:
        """Slice units per weight: bit planes (2's) or trit planes (ternary)."""
        if self.encoding == "twos":
            return self.weight_bits
        return self.weight_bits - 1

    @property
    def tree_level(self) -> int:
        for level in range(4):
            try:
                if self.weight_bits == supported_bitwidths(level, self.encoding):
                    return level
            except ValueError:
                continue
        raise MappingError("unreachable: bitwidth validated in __post_init__")

    def output_shape(self) -> tuple[int, int, int]:
        """(channels, height, width); fc output is 1x1 spatial."""
        if self.kind == "fc":
            return (self.out_channels, 1, 1)
        h = (self.input_height + 2 * self.padding - self.kernel) // self.stride + 1
        w = (self.input_width + 2 * self.padding - self.kernel) // self.stride + 1
        if h < 1 or w < 1:
            raise MappingError(f"kernel does not fit input in layer {self.name}")
        return (self.out_channels, h, w)

    @property
    def output_positions(self) -> int:
        _, h, w = self.output_shape()
        return h * w


@dataclass(frozen=True)
class Placement:
    """One (filter, plane) unit: group picks the row set, unit the slice
    (or slice pair) hosting split 0. Later splits rotate from here, see
    LayerMapping.unit_for."""
    filter: int
    plane: int  # significance index, 0 = least significant
    group: int
    unit: int


@dataclass(frozen=True)
class LayerMapping:
    layer: LayerSpec
    start_row: int  # global row-group index, macro-crossing allowed
    splits: int
    filter_groups: int
    unit_capacity: int  # slice units per row: 64 slices or 32 pairs
    occupied_rows: int
    macros_needed: int
    occupied_rows_per_slice: int
    placements: tuple[Placement, ...] = field(repr=False)

    def row_of(self, group: int, split: int, geometry: MacroGeometry) -> tuple[int, int]:
        """(macro, local row) of one row-group; splits of a group stack on
        consecutive rows."""
        row = self.start_row + group * self.splits + split
        return row // geometry.cells_per_cluster, row % geometry.cells_per_cluster

    def group_units(self, group: int) -> list[Placement]:
        return [p for p in self.placements if p.group == group]

    def group_unit_span(self, group: int) -> int:
        total = self.layer.out_channels * self.layer.planes
        return min(self.unit_capacity, total - group * self.unit_capacity)

    def unit_for(self, p: Placement, split: int) -> int:
        """Slice unit hosting one row split of a placement.

        Splits rotate whole plane blocks through the group's units. The
        stride is `planes`, and both the span and every block start are
        multiples of it, so planes of one weight stay on neighboring
        slices after rotation.
        """
        if self.splits == 1 or split == 0:
            return p.unit
        span = self.group_unit_span(p.group)
        return (p.unit + split * self.layer.planes) % span

    def mac_cycles_per_pass(self) -> int:
        return self.layer.output_positions * self.occupied_rows

    def schedule(self) -> dict:
        passes = nibble_passes(self.layer.input_bits)
        per_pass = self.mac_cycles_per_pass()
        return {
            "layer": self.layer.name,
            "mac_cycles": per_pass,
            "nibble_passes": passes,
            "total_cycles": per_pass * passes,
            "multi_pass_input": passes > 1,
        }


def map_layer(layer: LayerSpec, geometry: MacroGeometry | None = None,
              start_row: int = 0) -> LayerMapping:
    geometry = geometry or default_geometry()
    if start_row < 0:
        raise MappingError("start_row must be non-negative")
    splits = math.ceil(layer.filter_length / geometry.cols)
    capacity = (geometry.slices if layer.encoding == "twos"
                else geometry.slice_pairs)
    units = layer.out_channels * layer.planes
    groups = math.ceil(units / capacity)
    occupied = splits * groups
    end_row = start_row + occupied - 1
    first_macro = start_row // geometry.cells_per_cluster
    last_macro = end_row // geometry.cells_per_cluster
    macros = last_macro - first_macro + 1

    placements = []
    for f in range(layer.out_channels):
        for order in range(layer.planes):
            # neighboring slices hold the planes most significant first
            plane = layer.planes - 1 - order
            slot = f * layer.planes + order
            placements.append(Placement(filter=f, plane=plane,
                                        group=slot // capacity,
                                        unit=slot % capacity))
    return LayerMapping(
        layer=layer, start_row=start_row, splits=splits, filter_groups=groups,
        unit_capacity=capacity, occupied_rows=occupied, macros_needed=macros,
        occupied_rows_per_slice=math.ceil(occupied / macros),
        placements=tuple(placements))


@dataclass(frozen=True)
class NetworkMapping:
    mappings: tuple[LayerMapping, ...]
    total_rows: int
    macros_needed: int

    def schedule(self) -> dict:
        layers = [m.schedule() for m in self.mappings]
        return {
            "layers": layers,
            "total_mac_cycles": sum(s["mac_cycles"] for s in layers),
            "total_cycles": sum(s["total_cycles"] for s in layers),
        }


def map_network(layers, geometry: MacroGeometry | None = None) -> NetworkMapping:
    geometry = geometry or default_geometry()
    mappings = []
    row = 0
    for layer in layers:
        m = map_layer(layer, geometry, start_row=row)
        mappings.append(m)
        row += m.occupied_rows
    macros = math.ceil(row / geometry.cells_per_cluster) if row else 0
    return NetworkMapping(mappings=tuple(mappings), total_rows=row,
                          macros_needed=macros)


def _flat_weights(layer: LayerSpec, weights) -> np.ndarray:
    w = np.asarray(weights, dtype=np.int64)
    if layer.kind == "conv":
        expect = (layer.out_channels, layer.in_channels, layer.kernel, layer.kernel)
    else:
        expect = (layer.out_channels, layer.in_channels)
    if w.shape != expect:
        raise MappingError(f"weight shape {w.shape}, expected {expect}")
    if layer.encoding == "twos":
        lo, hi = -(1 << (layer.weight_bits - 1)), (1 << (layer.weight_bits - 1)) - 1
    else:
        hi = (1 << (layer.weight_bits - 1)) - 1
        lo = -hi
    if w.min() < lo or w.max() > hi:
        raise MappingError(f"weights outside {layer.weight_bits}-bit "
                           f"{layer.encoding} range in layer {layer.name}")
    return w.reshape(layer.out_channels, -1)


def empty_cells(macros: int, geometry: MacroGeometry | None = None) -> np.ndarray:
    geometry = geometry or default_geometry()
    return np.zeros((macros, geometry.cells_per_cluster, geometry.slices,
                     geometry.cols), dtype=np.uint8)


def write_layer(mapping: LayerMapping, weights, cells: np.ndarray,
                occupancy: np.ndarray | None = None,
                geometry: MacroGeometry | None = None) -> None:
    """Burn one layer's bit planes into the cell tensor
    (macro, row, slice, column). The occupancy mask, when given, rejects any
    cell written twice."""
    geometry = geometry or default_geometry()
    layer = mapping.layer
    flat = _flat_weights(layer, weights)
    cols = geometry.cols
    for p in mapping.placements:
        for split in range(mapping.splits):
            seg = flat[p.filter, split * cols:(split + 1) * cols]
            macro, row = mapping.row_of(p.group, split, geometry)
            unit = mapping.unit_for(p, split)
            if layer.encoding == "twos":
                bits = (seg >> p.plane) & 1
                targets = ((unit, bits),)
            else:
                digit = (np.abs(seg) >> p.plane) & 1
                targets = ((2 * unit, ((seg > 0) & (digit == 1)).astype(np.uint8)),
                           (2 * unit + 1, ((seg < 0) & (digit == 1)).astype(np.uint8)))
            for slice_idx, bits in targets:
                lanes = slice(0, seg.size)
                if occupancy is not None:
                    if occupancy[macro, row, slice_idx, lanes].any():
                        raise MappingError(
                            f"cell collision in layer {layer.name} at "
                            f"macro {macro} row {row} slice {slice_idx}")
                    occupancy[macro, row, slice_idx, lanes] = 1
                cells[macro, row, slice_idx, lanes] = bits


def read_layer(mapping: LayerMapping, cells: np.ndarray,
               geometry: MacroGeometry | None = None) -> np.ndarray:
    """Decode a layer's weights back out of the cell tensor."""
    geometry = geometry or default_geometry()
    layer = mapping.layer
    cols = geometry.cols
    flat = np.zeros((layer.out_channels, mapping.splits * cols), dtype=np.int64)
    msb = layer.planes - 1
    for p in mapping.placements:
        for split in range(mapping.splits):
            macro, row = mapping.row_of(p.group, split, geometry)
            lanes = slice(split * cols, (split + 1) * cols)
            unit = mapping.unit_for(p, split)
            if layer.encoding == "twos":
                bits = cells[macro, row, unit].astype(np.int64)
                signed = -bits if p.plane == msb else bits
            else:
                signed = (cells[macro, row, 2 * unit].astype(np.int64)
                          - cells[macro, row, 2 * unit + 1].astype(np.int64))
            flat[p.filter, lanes] += signed << p.plane
    flat = flat[:, :layer.filter_length]
    if layer.kind == "conv":
        return flat.reshape(layer.out_channels, layer.in_channels,
                            layer.kernel, layer.kernel)
    return flat


def storage_report(net: NetworkMapping,
                   geometry: MacroGeometry | None = None) -> dict:
    """Cluster-row usage across the macros the network needs."""
    geometry = geometry or default_geometry()
    used = 0
    for m in net.mappings:
        per_unit = 1 if m.layer.encoding == "twos" else 2
        for g in range(m.filter_groups):
            in_group = min(m.unit_capacity,
                           m.layer.out_channels * m.layer.planes
                           - g * m.unit_capacity)
            used += m.splits * in_group * per_unit
    total = net.macros_needed * geometry.slices * geometry.cells_per_cluster
    return {
        "rows_used": net.total_rows,
        "macros_needed": net.macros_needed,
        "cluster_rows_used": used,
        "cluster_rows_total": total,
        "utilization": used / total if total else 0.0,
    }


def mapping_manifest(net: NetworkMapping,
                     geometry: MacroGeometry | None = None) -> dict:
    geometry = geometry or default_geometry()
    layers = []
    for m in net.mappings:
        sched = m.schedule()
        units = m.layer.out_channels * m.layer.planes
        per_unit = 1 if m.layer.encoding == "twos" else 2
        full = min(units, m.unit_capacity)
        layers.append({
            "name": m.layer.name,
            "kind": m.layer.kind,
            "encoding": m.layer.encoding,
            "adc_mode": m.layer.adc_mode,
            "weight_bits": m.layer.weight_bits,
            "input_bits": m.layer.input_bits,
            "start_row": m.start_row,
            "splits": m.splits,
            "filter_groups": m.filter_groups,
            "occupied_rows": m.occupied_rows,
            "occupied_rows_per_slice": m.occupied_rows_per_slice,
            "macros_needed": m.macros_needed,
            "slices_used": full * per_unit,
            "mac_cycles": sched["mac_cycles"],
            "nibble_passes": sched["nibble_passes"],
            "total_cycles": sched["total_cycles"],
        })
    report = storage_report(net, geometry)
    return {
        "format": "cimsim-mapping",
        "version": 1,
        "layers": layers,
        "total_rows": net.total_rows,
        "macros_needed": net.macros_needed,
        "utilization": report["utilization"],
    }
