"""Ablation variant registry."""

from __future__ import annotations

from dataclasses import dataclass, replace

from .model import ModelConfig


class OutOfScopeVariant(LookupError):
    pass


@dataclass(frozen=True)
class VariantSpec:
    name: str
    modalities: frozenset
    video_flavor: str = "desc"
    use_instructional: bool = False
    use_cross_modal: bool = True
    use_hier_fusion: bool = True

    def apply(self, base=None):
        """A ModelConfig with this variant's wiring on top of ``base``."""
        base = base or ModelConfig()
        return replace(
            base,
            use_text="text" in self.modalities,
            use_audio="audio" in self.modalities,
            use_video="video" in self.modalities,
            video_flavor=self.video_flavor,
            use_instructional=self.use_instructional,
            use_cross_modal=self.use_cross_modal,
            use_hier_fusion=self.use_hier_fusion,
        ).validate()


def _v(name, mods, flavor="desc", **kw):
    return VariantSpec(name, frozenset(mods), flavor, **kw)


_TAV = ("text", "audio", "video")

REGISTRY = {v.name: v for v in [
    _v("Var-T", ["text"]),
    _v("Var-A", ["audio"]),
    _v("Var-VD", ["video"]),
    _v("Var-TA", ["text", "audio"]),
    _v("Var-TARV", _TAV, "raw"),
    _v("Var-AVD", ["audio", "video"]),
    _v("Var-TAVD", _TAV),
    _v("Var-TARVI", _TAV, "raw", use_instructional=True),
    _v("Var-CIHF", _TAV),
    _v("Var-FEHF", _TAV, use_instructional=True, use_cross_modal=False),
    _v("Var-FEAC", _TAV, use_instructional=True, use_hier_fusion=False),
    _v("full", _TAV, use_instructional=True),
]}
REGISTRY["AAM-TSA"] = replace(REGISTRY["full"], name="AAM-TSA")

# joint-training ablations need trainable encoders
OUT_OF_SCOPE = ("Var-FECI", "Var-JI", "Var-JICI")


def resolve_variant(name):
    if name in OUT_OF_SCOPE:
        raise OutOfScopeVariant(f"{name} is out of scope: requires trainable encoders (JT)")
    try:
        return REGISTRY[name]
    except KeyError:
        known = ", ".join(sorted(REGISTRY) + list(OUT_OF_SCOPE))
        raise KeyError(f"unknown variant {name!r}; registry: {known}") from None


def variant_config(name, base=None):
    return resolve_variant(name).apply(base)
