"""Geometric fixtures with provable detector outcomes.

The adversarial fixture places every claim in its own 3-dimensional frame
inside an 8-dimensional space. Clean evidence sits close to the claim
cross-modally; generated evidence hugs its conditioning side (caption for
texts, claim image for images) while pushing the cross-modal cosine to the
extreme the span permits. With equal fusion weights and threshold 0.70 this
makes true claims flip under full naive pollution while both hardening
strategies keep every claim correct, with a safety margin on every decision.

`verify_adversarial_fixture` recomputes all cosines and scenario scores from
the stored vectors with plain arithmetic (no detector code) and raises if
any target or margin is violated, so downstream assertions never run on a
silently broken construction.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from oocguard.embedding import EmbeddingCache, caption_key, cosine, image_key

DIM = 8
TAU = 0.70
MIN_MARGIN = 0.02
TRUE_CONSISTENCY = 0.85  # caption-image cosine of a pristine claim
FALSE_CONSISTENCY = 0.15  # caption-image cosine of a miscaptioned claim
CLEAN_CROSS = 0.82  # clean evidence vs the opposite claim side
CLEAN_SAME = 0.93  # clean evidence vs the side it genuinely documents
CLEAN_OFF = 0.20  # clean evidence vs the side a false claim fabricates
GEN_ANCHOR = 0.905  # generated evidence vs its conditioning side


@dataclass(frozen=True)
class AdversarialFixture:
    root: Path
    claims_path: Path
    evidence_path: Path
    pool_path: Path
    cache_path: Path
    n_true: int
    n_false: int

    @property
    def n_claims(self) -> int:
        return self.n_true + self.n_false


def _frame(rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    mat = rng.standard_normal((DIM, 3))
    q, r = np.linalg.qr(mat)
    q = q * np.sign(np.diag(r))  # pin orientation so reruns are identical
    return q[:, 0], q[:, 1], q[:, 2]


def _span_vector(q0, q1, q2, c: float, x: float, m: float) -> np.ndarray:
    """Unit vector with cosine x to the caption axis and m to the image axis."""
    s = math.sqrt(1.0 - c * c)
    y = (m - c * x) / s
    z_sq = 1.0 - x * x - y * y
    if z_sq < -1e-9:
        raise ValueError(f"infeasible cosine pair ({x}, {m}) at consistency {c}")
    z = math.sqrt(max(z_sq, 0.0))
    return x * q0 + y * q1 + z * q2


def _write_jsonl(path: Path, rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        for row in rows:
            handle.write(json.dumps(row, ensure_ascii=False) + "\n")
    return path


def build_adversarial_fixture(
    out_dir: str | Path, n_true: int = 5, n_false: int = 5, seed: int = 20260816
) -> AdversarialFixture:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cache = EmbeddingCache(dim=DIM)
    claims, evidence, pool = [], [], []
    rng = np.random.default_rng(seed)

    for label, count, c in (
        ("true", n_true, TRUE_CONSISTENCY),
        ("false", n_false, FALSE_CONSISTENCY),
    ):
        s = math.sqrt(1.0 - c * c)
        gen_res = math.sqrt(1.0 - GEN_ANCHOR * GEN_ANCHOR)
        for i in range(count):
            cid = f"{label}-{i:02d}"
            q0, q1, q2 = _frame(rng)
            u_caption = q0
            u_image = c * q0 + s * q1

            own = CLEAN_SAME if label == "true" else CLEAN_OFF
            clean_text = _span_vector(q0, q1, q2, c, x=own, m=CLEAN_CROSS)
            clean_image = _span_vector(q0, q1, q2, c, x=CLEAN_CROSS, m=own)

            # generated text: pinned to the caption, cross-modal cosine at the
            # span extreme (low for true claims, high for false ones)
            y_sign = -1.0 if label == "true" else 1.0
            gen_text = GEN_ANCHOR * q0 + y_sign * gen_res * q1

            # generated image: same construction with the axes swapped
            u_image_perp = -s * q0 + c * q1
            beta = gen_res if label == "true" else -gen_res
            gen_image = GEN_ANCHOR * u_image + beta * u_image_perp

            claims.append(
                {
                    "id": cid,
                    "caption": f"event report {cid}",
                    "image_ref": f"img/{cid}.png",
                    "label": label,
                    "split": "test",
                }
            )
            evidence.append(
                {
                    "id": f"t-{cid}",
                    "claim_id": cid,
                    "modality": "text",
                    "content": f"retrieved article for {cid}",
                    "provenance": "clean",
                    "kind": "none",
                }
            )
            evidence.append(
                {
                    "id": f"i-{cid}",
                    "claim_id": cid,
                    "modality": "image",
                    "content": f"img/retrieved-{cid}.png",
                    "provenance": "clean",
                    "kind": "none",
                }
            )
            pool.append(
                {
                    "id": f"g-t-{cid}",
                    "claim_id": cid,
                    "modality": "text",
                    "content": f"generated article for {cid}",
                    "provenance": "generated",
                    "kind": "support",
                }
            )
            pool.append(
                {
                    "id": f"g-i-{cid}",
                    "claim_id": cid,
                    "modality": "image",
                    "content": f"img/gen-{cid}.png",
                    "provenance": "generated",
                    "kind": "image_variation",
                }
            )

            for key, vec in (
                (caption_key(cid), u_caption),
                (image_key(cid), u_image),
                (f"t-{cid}", clean_text),
                (f"i-{cid}", clean_image),
                (f"g-t-{cid}", gen_text),
                (f"g-i-{cid}", gen_image),
            ):
                cache.put(key, vec.astype(np.float32))

    fixture = AdversarialFixture(
        root=out_dir,
        claims_path=_write_jsonl(out_dir / "claims.jsonl", claims),
        evidence_path=_write_jsonl(out_dir / "evidence.jsonl", evidence),
        pool_path=_write_jsonl(out_dir / "pool.jsonl", pool),
        cache_path=cache.save(out_dir / "embeddings.emb"),
        n_true=n_true,
        n_false=n_false,
    )
    verify_adversarial_fixture(fixture)
    return fixture


COS_TOL = 5e-6  # float32 storage rounds unit vectors by ~1e-7


def _assert_close(actual: float, target: float, what: str) -> None:
    if abs(actual - target) > COS_TOL:
        raise AssertionError(f"{what}: got {actual:.8f}, wanted {target:.8f}")


def _assert_side(fused: float, expect_true: bool, what: str) -> None:
    side = fused >= TAU
    if side != expect_true:
        raise AssertionError(f"{what}: fused {fused:.6f} lands on the wrong side of {TAU}")
    if abs(fused - TAU) < MIN_MARGIN:
        raise AssertionError(f"{what}: fused {fused:.6f} within {MIN_MARGIN} of {TAU}")


def verify_adversarial_fixture(fixture: AdversarialFixture) -> None:
    """Recompute every cosine and scenario score from the stored vectors."""
    cache = EmbeddingCache.load(fixture.cache_path)
    claims = [
        json.loads(line) for line in fixture.claims_path.read_text().splitlines()
    ]
    for claim in claims:
        cid = claim["id"]
        is_true = claim["label"] == "true"
        c = TRUE_CONSISTENCY if is_true else FALSE_CONSISTENCY
        u_t = cache.get(caption_key(cid))
        u_i = cache.get(image_key(cid))
        v_t = cache.get(f"t-{cid}")
        v_i = cache.get(f"i-{cid}")
        g_t = cache.get(f"g-t-{cid}")
        g_i = cache.get(f"g-i-{cid}")

        cons = cosine(u_i, u_t)
        ct = cosine(u_i, v_t)  # textual component, clean
        ci = cosine(u_t, v_i)  # visual component, clean
        gt = cosine(u_i, g_t)  # textual component, polluted
        gi = cosine(u_t, g_i)  # visual component, polluted
        own_clean = cosine(u_t, v_t)  # reasoning selection score, clean text
        own_gen = cosine(u_t, g_t)  # reasoning selection score, generated text
        gen_image_anchor = cosine(u_i, g_i)

        _assert_close(cons, c, f"{cid} consistency")
        _assert_close(ct, CLEAN_CROSS, f"{cid} clean text cross-modal")
        _assert_close(ci, CLEAN_CROSS, f"{cid} clean image cross-modal")
        _assert_close(own_clean, CLEAN_SAME if is_true else CLEAN_OFF, f"{cid} clean text own-side")
        _assert_close(own_gen, GEN_ANCHOR, f"{cid} generated text anchor")
        _assert_close(gen_image_anchor, GEN_ANCHOR, f"{cid} generated image anchor")

        if not (ct >= 0.8 and ci >= 0.8):
            raise AssertionError(f"{cid}: clean cross-modal cosine fell below 0.8")
        if not (own_gen >= 0.9 and gen_image_anchor >= 0.9):
            raise AssertionError(f"{cid}: generated anchor cosine fell below 0.9")
        if not (ct > gt and ci > gi):
            raise AssertionError(f"{cid}: reranking would not prefer clean evidence")
        if is_true and not own_clean > own_gen:
            raise AssertionError(f"{cid}: reasoning would not select the clean text")
        if not is_true and not own_gen > own_clean:
            raise AssertionError(f"{cid}: reasoning would not select the generated text")

        # fused-score scenarios, written out as plain arithmetic
        reason_clean = ct  # consistency of the clean text with the claim image
        reason_gen = gt
        scenarios = [
            ("clean, naive", (cons + ct + ci) / 3, is_true),
            ("clean, hardened", (cons + ct + ci + reason_clean) / 4, is_true),
            ("full pollution, naive", (cons + gt + gi) / 3, False),
            ("text-only pollution, naive", (cons + gt + ci) / 3, is_true),
            ("image-only pollution, naive", (cons + ct + gi) / 3, is_true),
        ]
        if is_true:
            # hardened: rerank restores clean evidence, reasoning picks clean text
            scenarios.append(
                ("full pollution, hardened", (cons + ct + ci + reason_clean) / 4, True)
            )
        else:
            # hardened: rerank restores clean evidence, reasoning picks the
            # caption-parroting generated text and exposes it cross-modally
            scenarios.append(
                ("full pollution, hardened", (cons + ct + ci + reason_gen) / 4, False)
            )
        for name, fused, expect_true in scenarios:
            _assert_side(fused, expect_true, f"{cid} {name}")
