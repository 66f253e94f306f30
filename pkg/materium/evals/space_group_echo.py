"""
@file space_group_echo.py
@brief Space-group "adherence" as target echo: symmetry detection is not performed.

@details
Reports the fraction of valid samples generated under a space-group target whose output record
carries that target in its metadata, and the per-target sample counts.
"""

from __future__ import annotations

from collections import Counter
from typing import Sequence

from ..data.corpus import GeneratedSample
from .baseeval import BaseEval, valid_samples


class SpaceGroupEcho(BaseEval):
    name = "SpaceGroupEcho"

    def eval(self, samples: Sequence[GeneratedSample]):
        targeted = [s for s in valid_samples(samples) if s.targets.get("space_group") is not None]
        if not targeted:
            return None
        echoed = [s for s in targeted if s.record.extra.get("space_group_target") == s.targets["space_group"]
                  or s.record.properties.get("space_group") == s.targets["space_group"]]
        counts = Counter(int(s.targets["space_group"]) for s in targeted)
        return {"echo_rate": len(echoed) / len(targeted), "per_target": {str(k): v for k, v in sorted(counts.items())}}
