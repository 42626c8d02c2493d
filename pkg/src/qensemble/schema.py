"""JSON schema for the metrics file written by ``qensemble eval``."""

METRICS_FORMAT = "qensemble-metrics/1"

METRICS_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "qensemble evaluation metrics",
    "type": "object",
    "additionalProperties": False,
    "required": [
        "format", "accuracy", "per_class_accuracy", "confusion", "trigger_rate",
        "circuit_evals", "num_samples", "num_models", "method", "split", "noise",
        "gamma", "shots", "seed", "checkpoint",
    ],
    "properties": {
        "format": {"const": METRICS_FORMAT},
        "accuracy": {"type": "number", "minimum": 0, "maximum": 1},
        "per_class_accuracy": {
            "type": "array",
            "items": {"type": ["number", "null"], "minimum": 0, "maximum": 1},
        },
        "confusion": {
            "description": "rows are true classes, columns predicted classes",
            "type": "array",
            "items": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        },
        "trigger_rate": {"type": "number", "minimum": 0, "maximum": 1},
        "circuit_evals": {"type": "integer", "minimum": 0},
        "num_samples": {"type": "integer", "minimum": 0},
        "num_models": {"type": "integer", "minimum": 1},
        "method": {"enum": ["corrected", "onevsone", "ensemble"]},
        "split": {"enum": ["train", "test", "all"]},
        "noise": {
            "type": "object",
            "additionalProperties": False,
            "required": ["p1", "p2"],
            "properties": {
                "p1": {"type": "number", "minimum": 0, "maximum": 1},
                "p2": {"type": "number", "minimum": 0, "maximum": 1},
            },
        },
        "gamma": {"type": ["number", "null"], "minimum": 0},
        "shots": {"type": ["integer", "null"], "minimum": 1},
        "seed": {"type": "integer"},
        "checkpoint": {"type": "string"},
    },
}
