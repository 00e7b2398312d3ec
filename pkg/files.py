import json
import os
import tempfile

import pandas as pd


def xmkdir(path):
    """Create directory PATH recursively if it does not exist."""
    if path and not os.path.exists(path):
        os.makedirs(path)


def atomic_write(path, text):
    """Write TEXT to PATH through a temp file in the same directory and an atomic rename."""
    directory = os.path.dirname(os.path.abspath(path))
    xmkdir(directory)
    fd, tmp = tempfile.mkstemp(prefix='.tmp-', dir=directory)
    try:
        with os.fdopen(fd, 'w', encoding='utf-8', newline='') as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


def write_json(path, obj):
    atomic_write(path, json.dumps(obj, indent=2) + '\n')


def read_json(path):
    with open(path, encoding='utf-8') as f:
        return json.load(f)


def write_table(path, rows, columns=None):
    """Write a list of dicts (or a DataFrame) as CSV."""
    frame = rows if isinstance(rows, pd.DataFrame) else pd.DataFrame(rows, columns=columns)
    atomic_write(path, frame.to_csv(index=False))


def read_table(path):
    return pd.read_csv(path, keep_default_na=False, na_values=[''])


def save_model(model, model_path):
    """Save a TrainedModel to the JSON model file MODEL_PATH."""
    if model_path is not None:
        write_json(model_path, model.to_dict())


def load_model(model_path):
    from models import TrainedModel
    return TrainedModel.from_dict(read_json(model_path))
