"""JSON Schemas (draft 2020-12) for the machine-readable outputs."""

_RATE = {"type": "number", "minimum": 0, "maximum": 1}
_COUNT = {"type": "integer", "minimum": 0}

METRICS_RECORD = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "metrics.jsonl line",
    "type": "object",
    "properties": {
        "epoch": _COUNT,
        "train_loss": {"type": "number", "minimum": 0},
        "train_accuracy": _RATE,
        "val_loss": {"type": "number", "minimum": 0},
        "val_accuracy": _RATE,
        "lr": {"type": "number", "exclusiveMinimum": 0},
    },
    "required": ["epoch", "train_loss", "train_accuracy", "val_loss", "val_accuracy", "lr"],
    "additionalProperties": False,
}

TIMING_RECORD = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "timing.jsonl line",
    "type": "object",
    "properties": {"epoch": _COUNT, "wall_time": {"type": "number", "minimum": 0}},
    "required": ["epoch", "wall_time"],
    "additionalProperties": False,
}

EVAL_REPORT = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "eval output",
    "type": "object",
    "properties": {
        "snapshots": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "properties": {
                    "name": {"type": "string"},
                    "p_fa": _RATE,
                    "p_md": _RATE,
                    "p_e": _RATE,
                    "confusion": {
                        "type": "object",
                        "properties": {k: _COUNT for k in (
                            "cover_as_cover", "cover_as_stego", "stego_as_cover", "stego_as_stego")},
                        "required": ["cover_as_cover", "cover_as_stego", "stego_as_cover", "stego_as_stego"],
                        "additionalProperties": False,
                    },
                },
                "required": ["name", "p_fa", "p_md", "p_e", "confusion"],
                "additionalProperties": False,
            },
        },
        "mean_p_e": _RATE,
    },
    "required": ["snapshots", "mean_p_e"],
    "additionalProperties": False,
}
