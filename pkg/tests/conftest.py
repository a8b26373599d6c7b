import json
from pathlib import Path

import pytest

from oocguard.corpus import Claim, Corpus, EvidenceItem, Kind, Label, Modality, Provenance, Split


def make_claim(cid="c1", caption="A caption", image_ref="img/c1.png", label=Label.TRUE, split=Split.TEST):
    return Claim(id=cid, caption=caption, image_ref=image_ref, label=label, split=split)


def make_evidence(
    eid="e1",
    claim_id="c1",
    modality=Modality.TEXT,
    content="some evidence",
    provenance=Provenance.CLEAN,
    kind=Kind.NONE,
):
    return EvidenceItem(
        id=eid,
        claim_id=claim_id,
        modality=modality,
        content=content,
        provenance=provenance,
        kind=kind,
    )


def write_jsonl(path, records):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record, ensure_ascii=False) + "\n")
    return path


@pytest.fixture
def tiny_corpus():
    claims = [
        make_claim("c1", "First caption", "img/one.png", Label.TRUE, Split.TEST),
        make_claim("c2", "Second caption", "img/two.png", Label.FALSE, Split.TEST),
    ]
    evidence = [
        make_evidence("t1", "c1", Modality.TEXT, "clean text one"),
        make_evidence("t2", "c2", Modality.TEXT, "clean text two"),
        make_evidence("i1", "c1", Modality.IMAGE, "img/ev1.png"),
        make_evidence("i2", "c2", Modality.IMAGE, "img/ev2.png"),
    ]
    return Corpus(claims, evidence)
