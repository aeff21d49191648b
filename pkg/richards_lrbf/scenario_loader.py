"""
Scenario Loader Module
Loads shipped soil tables and scenario files, validates them and applies desk-scale overrides

Scenario files are JSON documents. Soil materials are either inlined or referenced by
name from a table in the soil data directory; every validation failure is reported as a
``ScenarioParseError`` carrying the file path and the line of the offending key.
"""

import json
import logging
import os
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Tuple

from .domain_discretization import active_axes_for
from .exceptions import ConfigurationError, DomainError, ScenarioParseError
from .lrbf_operators import KernelConfig
from .nonlinear_stepper import BoundarySpec, InitialCondition, StepperConfig
from .soil_constitutive import (
    CurvilinearField,
    HomogeneousField,
    LayeredField,
    SoilField,
    SoilParams,
    SplitXField,
    beta_from_lambda,
    vg_to_bc,
)

logger = logging.getLogger(__name__)

LENGTH_UNITS = ('m', 'cm')
TIME_UNITS = ('day', 'h', 'min', 's')

SCENARIO_KEYS = {
    'name', 'description', 'units', 'dimensions', 'extents', 'counts', 'soil', 'initial',
    'boundary', 'kernel', 'stepper', 'final_time', 'output_times', 'h_bar',
}
REQUIRED_KEYS = ('name', 'units', 'dimensions', 'extents', 'counts', 'soil', 'initial',
                 'kernel', 'stepper', 'final_time')
SOIL_KEYS = {
    'homogeneous': {'kind', 'table', 'material'},
    'layered_z': {'kind', 'table', 'layers'},
    'split_x': {'kind', 'table', 'x_thresholds', 'regions', 'z_threshold', 'upper'},
    'curvilinear': {'kind', 'table', 'l1', 'l2', 'above', 'below'},
}
MATERIAL_KEYS = {'name', 'theta_r', 'theta_s', 'theta_0', 'k_s', 'h_d', 'lambda', 'beta',
                 'van_genuchten'}
INITIAL_KEYS = {'kind', 'value', 'gradient'}
BOUNDARY_KEYS = {'top_head', 'bottom_head'}
KERNEL_KEYS = {'shape', 'n_s', 'scaling'}
STEPPER_KEYS = {'dt', 'tol', 'max_picard', 'linear_solver', 'storage'}


@dataclass(frozen=True)
class SoilTable:
    """A named set of soil records sharing one unit system."""

    name: str
    units: Dict[str, str]
    soils: Dict[str, SoilParams]
    description: str = ""
    initial_water_content: Dict[str, float] = field(default_factory=dict)
    layers: Tuple[Dict[str, Any], ...] = ()

    def soil(self, name: str) -> SoilParams:
        if name not in self.soils:
            raise KeyError(name)
        return self.soils[name]

    def summary(self) -> Dict[str, Any]:
        return {
            'name': self.name,
            'description': self.description,
            'units': f"{self.units['length']}/{self.units['time']}",
            'soils': list(self.soils),
        }


class _Locator:
    """Maps keys of a JSON document back to line numbers of its text."""

    def __init__(self, path: str, text: str):
        self.path = path
        self.lines = text.splitlines()

    def line_of(self, key: str, after: Optional[int] = None) -> Optional[int]:
        token = f'"{key}"'
        start = (after or 1) - 1
        for number in range(start, len(self.lines)):
            if token in self.lines[number]:
                return number + 1
        return after

    def error(self, message: str, key: Optional[str] = None, after: Optional[int] = None):
        line = self.line_of(key, after) if key else after
        return ScenarioParseError(message, self.path, line)


def _read_json(path: str) -> Tuple[Dict[str, Any], _Locator]:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            text = f.read()
    except OSError as exc:
        raise ScenarioParseError(f"cannot read file: {exc.strerror or exc}", path)
    locator = _Locator(path, text)
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioParseError(f"invalid JSON: {exc.msg}", path, exc.lineno)
    if not isinstance(data, dict):
        raise ScenarioParseError("top level must be an object", path, 1)
    return data, locator


def _check_units(units: Any, locator: _Locator) -> Dict[str, str]:
    if not isinstance(units, dict) or set(units) != {'length', 'time'}:
        raise locator.error("units must be an object with 'length' and 'time'", 'units')
    if units['length'] not in LENGTH_UNITS:
        raise locator.error(f"unknown length unit '{units['length']}'", 'units')
    if units['time'] not in TIME_UNITS:
        raise locator.error(f"unknown time unit '{units['time']}'", 'units')
    return {'length': units['length'], 'time': units['time']}


def _check_keys(section: Dict[str, Any], allowed, locator: _Locator, where: str,
                after: Optional[int] = None):
    for key in section:
        if key not in allowed:
            raise locator.error(f"unknown key '{key}' in {where}", key, after)


def material_from_dict(data: Dict[str, Any], name: str = "") -> SoilParams:
    """
    Build a soil record from Brooks-Corey values or from a ``van_genuchten`` block.

    ``beta`` may be omitted, in which case it follows from lambda.
    """
    data = dict(data)
    vg = data.pop('van_genuchten', None)
    if vg is not None:
        h_d, lam = vg_to_bc(float(vg['alpha']), float(vg['n']), vg.get('m'))
        data['h_d'] = h_d
        data['lambda'] = lam
    if 'beta' not in data:
        data['beta'] = beta_from_lambda(float(data['lambda']))
    data.setdefault('name', name)
    return SoilParams.from_dict(data)


class SoilTableLoader:
    """Loads soil tables from the data directory and caches them by name."""

    def __init__(self, data_directory: str = "soil_data"):
        self.data_directory = data_directory
        self.table_cache: Dict[str, SoilTable] = {}

    def list_tables(self) -> List[str]:
        if not os.path.isdir(self.data_directory):
            return []
        return sorted(
            os.path.splitext(entry)[0]
            for entry in os.listdir(self.data_directory)
            if entry.endswith('.json')
        )

    def table_path(self, name: str) -> str:
        return os.path.join(self.data_directory, f"{name}.json")

    def load_table(self, name: str) -> SoilTable:
        """Load and validate one table; repeated calls return the cached record."""
        if name in self.table_cache:
            return self.table_cache[name]
        path = self.table_path(name)
        if not os.path.exists(path):
            raise ScenarioParseError(f"soil table '{name}' not found in {self.data_directory}")
        data, locator = _read_json(path)
        _check_keys(data, {'name', 'description', 'units', 'soils', 'layers'}, locator, 'soil table')
        if 'soils' not in data or not isinstance(data['soils'], dict):
            raise locator.error("a soil table needs a 'soils' object", 'soils')
        units = _check_units(data.get('units'), locator)

        soils, theta_0 = {}, {}
        for soil_name, record in data['soils'].items():
            line = locator.line_of(soil_name)
            _check_keys(record, MATERIAL_KEYS, locator, f"soil '{soil_name}'", line)
            try:
                soils[soil_name] = material_from_dict(
                    {k: v for k, v in record.items() if k != 'theta_0'}, soil_name
                )
            except (KeyError, TypeError, ValueError, ConfigurationError, DomainError) as exc:
                raise ScenarioParseError(f"soil '{soil_name}': {_reason(exc)}", path, line)
            if 'theta_0' in record:
                theta_0[soil_name] = float(record['theta_0'])

        table = SoilTable(
            name=data.get('name', name),
            units=units,
            soils=soils,
            description=data.get('description', ''),
            initial_water_content=theta_0,
            layers=tuple(data.get('layers', ())),
        )
        self.table_cache[name] = table
        logger.debug("loaded soil table %s (%d soils)", name, len(soils))
        return table

    def get_table_summaries(self) -> List[Dict[str, Any]]:
        return [self.load_table(name).summary() for name in self.list_tables()]


def _reason(exc: Exception) -> str:
    if isinstance(exc, KeyError):
        return f"missing value {exc}"
    return str(exc)


@dataclass(frozen=True)
class Scenario:
    """A fully validated simulation setup."""

    name: str
    dims: int
    extents: Tuple[float, float, float]
    counts: Tuple[int, int, int]
    soil: SoilField
    soil_spec: Dict[str, Any]
    initial: InitialCondition
    boundary: BoundarySpec
    kernel: KernelConfig
    stepper: StepperConfig
    final_time: float
    output_times: Tuple[float, ...]
    units: Dict[str, str]
    h_bar: Optional[float] = None
    description: str = ""

    @property
    def is_1d(self) -> bool:
        return self.dims == 1

    def to_dict(self) -> Dict[str, Any]:
        """Serializable form accepted back by ``scenario_from_dict``."""
        data = {
            'name': self.name,
            'description': self.description,
            'units': dict(self.units),
            'dimensions': self.dims,
            'extents': list(self.extents),
            'counts': list(self.counts),
            'soil': self.soil_spec,
            'initial': self.initial.to_dict(),
            'boundary': self.boundary.to_dict(),
            'kernel': {'shape': self.kernel.shape, 'n_s': self.kernel.n_s,
                       'scaling': self.kernel.scaling},
            'stepper': self.stepper.to_dict(),
            'final_time': self.final_time,
            'output_times': list(self.output_times),
        }
        if self.h_bar is not None:
            data['h_bar'] = self.h_bar
        return data

    def with_overrides(self, grid_scale: Optional[float] = None, dt: Optional[float] = None,
                       final_time: Optional[float] = None) -> 'Scenario':
        """
        Desk-scale copy: node counts of active axes scaled by ``grid_scale`` (at least
        3 nodes each), a new time step and a new final time. Output times past the new
        final time are dropped; the final time itself is kept as an output.
        """
        counts = list(self.counts)
        if grid_scale is not None:
            if not grid_scale > 0.0:
                raise ConfigurationError("grid scale must be positive")
            for axis in active_axes_for(self.dims):
                counts[axis] = max(3, int(round((counts[axis] - 1) * grid_scale)) + 1)
        stepper = self.stepper if dt is None else replace(self.stepper, dt=float(dt))
        end = self.final_time if final_time is None else float(final_time)
        if end < 0.0:
            raise ConfigurationError("final time must be non-negative")
        outputs = tuple(t for t in self.output_times if t <= end * (1.0 + 1e-12))
        if final_time is not None and (not outputs or outputs[-1] < end):
            outputs = outputs + (end,)
        return replace(self, counts=tuple(counts), stepper=stepper, final_time=end,
                       output_times=outputs)


class ScenarioLoader:
    """Resolves scenario files against the soil tables of a data directory."""

    def __init__(self, data_directory: str = "soil_data", scenario_directory: str = "scenarios"):
        self.tables = SoilTableLoader(data_directory)
        self.scenario_directory = scenario_directory

    def list_scenarios(self) -> List[str]:
        if not os.path.isdir(self.scenario_directory):
            return []
        return sorted(
            os.path.splitext(entry)[0]
            for entry in os.listdir(self.scenario_directory)
            if entry.endswith('.json')
        )

    def resolve_path(self, name_or_path: str) -> str:
        """A path as given, or a shipped scenario looked up by name."""
        if os.path.exists(name_or_path):
            return name_or_path
        candidate = os.path.join(self.scenario_directory, f"{name_or_path}.json")
        if os.path.exists(candidate):
            return candidate
        return name_or_path

    def parse_scenario(self, path: str) -> Scenario:
        """Read and validate a scenario file."""
        path = self.resolve_path(path)
        data, locator = _read_json(path)
        scenario = self.scenario_from_dict(data, locator)
        logger.info("parsed scenario %s from %s", scenario.name, path)
        return scenario

    def scenario_from_dict(self, data: Dict[str, Any], locator: Optional[_Locator] = None) -> Scenario:
        """Validate an in-memory scenario document."""
        if locator is None:
            locator = _Locator('<scenario>', json.dumps(data, indent=2))
        _check_keys(data, SCENARIO_KEYS, locator, 'scenario')
        for key in REQUIRED_KEYS:
            if key not in data:
                raise locator.error(f"missing required key '{key}'")

        units = _check_units(data['units'], locator)
        dims = data['dimensions']
        if dims not in (1, 2, 3):
            raise locator.error(f"dimensions must be 1, 2 or 3, got {dims}", 'dimensions')
        extents = self._triple(data['extents'], float, 'extents', locator)
        counts = self._triple(data['counts'], int, 'counts', locator)
        axes = active_axes_for(dims)
        for axis in range(3):
            if axis in axes and (counts[axis] < 3 or extents[axis] <= 0.0):
                raise locator.error(f"axis {axis} needs at least 3 nodes and a positive extent",
                                    'counts')
            if axis not in axes and counts[axis] != 1:
                raise locator.error(f"inactive axis {axis} must have exactly one node", 'counts')

        soil = self._soil_field(data['soil'], extents, units, locator)
        initial = self._section(data['initial'], INITIAL_KEYS, 'initial', locator,
                                lambda s: InitialCondition(**s))
        boundary = self._section(data.get('boundary', {}), BOUNDARY_KEYS, 'boundary', locator,
                                 lambda s: BoundarySpec(**s))
        kernel = self._section(data['kernel'], KERNEL_KEYS, 'kernel', locator,
                               lambda s: KernelConfig(**s))
        stepper = self._section(data['stepper'], STEPPER_KEYS, 'stepper', locator,
                                lambda s: StepperConfig(**s))
        self._check_initial(initial, soil, locator)

        final_time = float(data['final_time'])
        if final_time < 0.0:
            raise locator.error("final_time must be non-negative", 'final_time')
        output_times = tuple(sorted(float(t) for t in data.get('output_times', ())))
        for t in output_times:
            if t < 0.0 or t > final_time * (1.0 + 1e-12):
                raise locator.error(f"output time {t:g} lies outside [0, {final_time:g}]",
                                    'output_times')
        h_bar = data.get('h_bar')
        if h_bar is not None and not float(h_bar) < 0.0:
            raise locator.error("h_bar must be negative", 'h_bar')

        return Scenario(
            name=str(data['name']),
            dims=dims,
            extents=extents,
            counts=counts,
            soil=soil,
            soil_spec=data['soil'],
            initial=initial,
            boundary=boundary,
            kernel=kernel,
            stepper=stepper,
            final_time=final_time,
            output_times=output_times,
            units=units,
            h_bar=None if h_bar is None else float(h_bar),
            description=data.get('description', ''),
        )

    @staticmethod
    def _triple(values, cast, key: str, locator: _Locator):
        if not isinstance(values, list) or len(values) != 3:
            raise locator.error(f"'{key}' must be a list of three numbers", key)
        try:
            return tuple(cast(v) for v in values)
        except (TypeError, ValueError):
            raise locator.error(f"'{key}' must be a list of three numbers", key)

    @staticmethod
    def _section(section, allowed, key: str, locator: _Locator, build):
        if not isinstance(section, dict):
            raise locator.error(f"'{key}' must be an object", key)
        line = locator.line_of(key)
        _check_keys(section, allowed, locator, key, line)
        try:
            return build(section)
        except (TypeError, ValueError, ConfigurationError) as exc:
            raise ScenarioParseError(f"{key}: {exc}", locator.path, line)

    @staticmethod
    def _check_initial(initial: InitialCondition, soil: SoilField, locator: _Locator):
        if initial.kind != 'water_content':
            return
        for p in soil.materials:
            if not p.theta_r < initial.value <= p.theta_s:
                raise locator.error(
                    f"initial water content {initial.value:g} lies outside "
                    f"({p.theta_r:g}, {p.theta_s:g}] of {p.label}", 'initial'
                )

    def _soil_field(self, spec: Any, extents, units, locator: _Locator) -> SoilField:
        if not isinstance(spec, dict) or 'kind' not in spec:
            raise locator.error("'soil' must be an object with a 'kind'", 'soil')
        kind = spec['kind']
        if kind not in SOIL_KEYS:
            raise locator.error(f"unknown soil kind '{kind}'", 'kind')
        line = locator.line_of('soil')
        _check_keys(spec, SOIL_KEYS[kind], locator, 'soil', line)

        table = None
        if 'table' in spec:
            try:
                table = self.tables.load_table(spec['table'])
            except ScenarioParseError as exc:
                raise ScenarioParseError(str(exc), locator.path, locator.line_of('table', line))
            if table.units != units:
                raise locator.error(
                    f"unit mismatch: scenario uses {units['length']}/{units['time']} but table "
                    f"'{table.name}' uses {table.units['length']}/{table.units['time']}",
                    'table', line,
                )

        def material(ref, key):
            where = locator.line_of(key, line)
            if isinstance(ref, str):
                if table is None:
                    raise ScenarioParseError(f"soil '{ref}' referenced without a table",
                                             locator.path, where)
                try:
                    return table.soil(ref)
                except KeyError:
                    raise ScenarioParseError(f"soil '{ref}' not found in table '{table.name}'",
                                             locator.path, where)
            if not isinstance(ref, dict):
                raise ScenarioParseError(f"'{key}' must name or define a material",
                                         locator.path, where)
            _check_keys(ref, MATERIAL_KEYS - {'theta_0'}, locator, key, where)
            try:
                return material_from_dict(ref, ref.get('name', key))
            except (KeyError, TypeError, ValueError, ConfigurationError, DomainError) as exc:
                raise ScenarioParseError(f"{key}: {_reason(exc)}", locator.path, where)

        try:
            if kind == 'homogeneous':
                return HomogeneousField(extents=extents, soil=material(spec.get('material'), 'material'))
            if kind == 'layered_z':
                layers = spec.get('layers') or (table.layers if table else ())
                resolved = tuple(
                    (float(layer['z_bottom']), float(layer['z_top']), material(layer['soil'], 'layers'))
                    for layer in layers
                )
                return LayeredField(extents=extents, layers=resolved)
            if kind == 'split_x':
                upper = spec.get('upper')
                return SplitXField(
                    extents=extents,
                    x_thresholds=tuple(float(t) for t in spec.get('x_thresholds', ())),
                    regions=tuple(material(r, 'regions') for r in spec.get('regions', ())),
                    z_threshold=spec.get('z_threshold'),
                    upper=None if upper is None else material(upper, 'upper'),
                )
            return CurvilinearField(
                extents=extents,
                l1=float(spec.get('l1', extents[0])),
                l2=float(spec.get('l2', extents[2])),
                above=material(spec.get('above'), 'above'),
                below=material(spec.get('below'), 'below'),
            )
        except (KeyError, TypeError) as exc:
            raise ScenarioParseError(f"soil: {_reason(exc)}", locator.path, line)
        except ConfigurationError as exc:
            raise ScenarioParseError(f"soil: {exc}", locator.path, line)


def save_scenario(scenario: Scenario, path: str):
    """Write a scenario in the file format read by ``ScenarioLoader.parse_scenario``."""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(scenario.to_dict(), f, indent=2, ensure_ascii=False)
