"""Python bindings for genret.

Records (worlds, scenes, ranking instances, scored instances, calibration
tables) are plain dicts and lists, in the same shapes as the files the
command-line tool reads and writes.
"""

import json

from . import _genret
from ._genret import Error, Template, average_precision, calibrated_prob

__all__ = [
    "Error",
    "Oracle",
    "Template",
    "apply_calibration",
    "average_precision",
    "calibrated_prob",
    "fit_calibration",
    "make_world",
    "mean_average_precision",
    "mean_balanced_accuracy",
    "mean_rank",
    "mean_recall_at_k",
    "overall_f1_at_k",
    "run",
    "sample_scenes",
]


def run(*args):
    """Run a CLI command in-process. Returns (exit_code, stdout, stderr)."""
    return _genret.run_cli([str(a) for a in args])


def make_world(seed):
    return json.loads(_genret.make_world(seed))


def sample_scenes(world, n, max_entities=3):
    return json.loads(_genret.sample_scenes(json.dumps(world), n, max_entities))


class Oracle:
    """The exact synthetic-scene scorer."""

    def __init__(self, world, scenes, smoothing=1e-6):
        self._b = _genret.OracleBackend(json.dumps(world), json.dumps(scenes), smoothing)

    def vocabulary(self):
        return self._b.vocabulary()

    def next_token_distribution(self, image_id, prefix, region=None):
        return self._b.next_token_distribution(image_id, list(prefix), region)

    def generative_loss(self, image_id, sentence, region=None):
        return self._b.generative_loss(image_id, _tokens(sentence), region)

    def contrastive_loss(self, image_id, sentence, region=None):
        return self._b.contrastive_loss(image_id, _tokens(sentence), region)

    def rank(self, instances, template, method="generative", parallelism=1):
        if isinstance(template, str):
            template = Template(template)
        out = self._b.rank(json.dumps(list(instances)), template, method, parallelism)
        return json.loads(out)


def _tokens(sentence):
    return sentence.split() if isinstance(sentence, str) else list(sentence)


def mean_rank(scored):
    return _genret.mean_rank(json.dumps(scored))


def mean_recall_at_k(scored, k):
    return _genret.mean_recall_at_k(json.dumps(scored), k)


def mean_average_precision(scored, per_instance=False):
    return _genret.mean_average_precision(json.dumps(scored), per_instance)


def mean_balanced_accuracy(scored, probs, threshold):
    return _genret.mean_balanced_accuracy(json.dumps(scored), probs, threshold)


def overall_f1_at_k(scored, k):
    return _genret.overall_f1_at_k(json.dumps(scored), k)


def fit_calibration(scored, **config):
    return json.loads(_genret.fit_calibration(json.dumps(scored), json.dumps(config)))


def apply_calibration(table, scored):
    return _genret.apply_calibration(json.dumps(table), json.dumps(scored))
