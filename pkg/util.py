import contextlib
import logging
import random
import zlib

import numpy as np
import torch

from errors import StageFailed

logger = logging.getLogger(__name__)


class AverageMeter(object):
    """Computes and stores the average and current value"""

    def __init__(self):
        self.reset()

    def reset(self):
        self.val = 0
        self.avg = 0
        self.sum = 0
        self.count = 0

    def update(self, val, n=1):
        self.val = val
        self.sum += val * n
        self.count += n
        self.avg = self.sum / self.count


def setup_runtime(seed=0, verbose=False):
    """Configure logging and fix the global random seeds."""
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO,
                        format='%(asctime)s %(name)s %(levelname)s %(message)s')
    random.seed(seed)
    np.random.seed(seed)
    torch.manual_seed(seed)


def substream(seed, name):
    """Integer seed of the named random substream derived from the run seed.

    Every consumer of randomness (balance, folds, bootstrap, synth) draws from its
    own substream so that adding draws in one stage never shifts another.
    """
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, zlib.crc32(name.encode('utf-8'))])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def rng_for(seed, name):
    return np.random.default_rng(substream(seed, name))


@contextlib.contextmanager
def stage(name):
    """Run a pipeline stage; any failure is re-raised as StageFailed(name)."""
    logger.debug(f"stage {name} starting")
    try:
        yield
    except StageFailed:
        raise
    except Exception as e:
        raise StageFailed(name, e) from e
