import copy
import json
import logging
from pathlib import Path

import pandas as pd
import yaml

from shapefit.configs import config_sections, configs
from shapefit.exceptions import UsageError
from shapefit.volume import GridSpec

logger = logging.getLogger(__name__)


def create_yaml(data, f):
    try:
        with open(f, 'w') as yf:
            yaml.dump(data, yf, default_flow_style=False, sort_keys=False)
    except yaml.YAMLError as exc:
        logger.error(exc)
        return False
    else:
        return True


def read_yaml(f):
    with open(f, 'r') as stream:
        try:
            return yaml.safe_load(stream)
        except yaml.YAMLError as exc:
            raise UsageError(f"{f}: invalid YAML ({exc})")


def read_json(f):
    with open(f, 'r') as file:
        try:
            return json.load(file)
        except json.JSONDecodeError as e:
            raise UsageError(f"{f}: invalid JSON ({e})")


def write_json(data, f):
    with open(f, 'w', encoding='utf-8') as file:
        json.dump(data, file, indent=4, ensure_ascii=False)
        file.write('\n')


def read_config(f):
    """read a YAML (.yaml/.yml) or JSON config file into a dict of known sections"""
    path = Path(f)
    data = read_yaml(path) if path.suffix.lower() in ('.yaml', '.yml') else read_json(path)
    data = data or {}
    if not isinstance(data, dict):
        raise UsageError(f"{f}: the config must be a mapping of sections")
    unknown = set(data) - set(config_sections)
    if unknown:
        raise UsageError(f"{f}: unknown config sections {sorted(unknown)}, expected {list(config_sections)}")
    return data


def resolve_config(config_file=None, overrides=None):
    """
    built-in defaults, updated by the config file, updated by command line overrides
    @param overrides: {section: {key: value}} from flags
    @return: dict with every config section
    """
    resolved = {section: copy.deepcopy(configs[section]) for section in config_sections}
    layers = [read_config(config_file) if config_file else {}, overrides or {}]
    for layer in layers:
        for section, values in layer.items():
            if values is None:
                continue
            if not isinstance(values, dict):
                raise UsageError(f"config section {section} must be a mapping")
            resolved[section].update(values)
    return resolved


def parse_grid(text: str) -> GridSpec:
    """
    'nx,ny,nz/sx,sy,sz/ox,oy,oz' (spacing and origin optional, single values broadcast)
    """
    parts = text.split('/')
    if not 1 <= len(parts) <= 3:
        raise UsageError(f"invalid grid {text!r}, expected dims/spacing/origin")

    def triple(part, cast):
        values = [cast(v) for v in part.replace('x', ',').split(',') if v.strip()]
        if len(values) == 1:
            values = values * 3
        if len(values) != 3:
            raise ValueError(part)
        return tuple(values)

    try:
        dims = triple(parts[0], int)
        spacing = triple(parts[1], float) if len(parts) > 1 else (1.0, 1.0, 1.0)
        origin = triple(parts[2], float) if len(parts) > 2 else (0.0, 0.0, 0.0)
        return GridSpec(dims, spacing, origin)
    except ValueError as e:
        raise UsageError(f"invalid grid {text!r} ({e})")


def tableize(df):
    """
    pretty-print a dataframe as a boxed plain text table
    """
    if not isinstance(df, pd.DataFrame) or df.empty:
        return ''
    columns = [str(c) for c in df.columns]
    cells = df.astype(str).values.tolist()
    widths = [2 + max(len(col), *(len(row[idx]) for row in cells)) for idx, col in enumerate(columns)]

    def right(text, size):
        return f"{text} ".rjust(size)

    def data_line(row, align):
        return '|' + '|'.join(align(val, widths[idx]) for idx, val in enumerate(row)) + '|'

    hline = '+' + '+'.join('-' * size for size in widths) + '+'
    out = [hline, data_line(columns, str.center), hline]
    out += [data_line(row, right) for row in cells]
    out.append(hline)
    return '\n'.join(out) + '\n'
