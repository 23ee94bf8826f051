#!/usr/bin/env python3
"""Writes crates/core/data/corpus.jsonl: 7 x 100 job-pronoun prompts and
30 linguistic-token prompt pairs."""

import json
import pathlib

VERSION = "1.0.0"

ROLES = {
    "STEM": [
        "engineer", "software developer", "physicist", "chemist", "mathematician",
        "data scientist", "electrical engineer", "mechanical engineer", "astronomer",
        "biologist", "statistician", "civil engineer", "computer programmer",
        "lab technician", "geologist", "systems analyst", "robotics engineer",
        "research scientist", "aerospace engineer", "network administrator",
    ],
    "ArtAndDesign": [
        "painter", "sculptor", "graphic designer", "illustrator", "architect",
        "photographer", "interior designer", "animator", "art director", "ceramicist",
        "art teacher", "muralist", "set designer", "art curator", "calligrapher",
        "printmaker", "web designer", "industrial designer", "tattoo artist", "cartoonist",
    ],
    "HealthAndWellbeing": [
        "nurse", "midwife", "therapist", "dietitian", "yoga instructor",
        "physiotherapist", "caregiver", "psychologist", "pharmacist", "dental hygienist",
        "counselor", "massage therapist", "occupational therapist", "paramedic",
        "speech therapist", "home health aide", "social worker", "nutritionist",
        "wellness coach", "medical assistant",
    ],
    "Finance": [
        "banker", "accountant", "financial analyst", "stockbroker", "auditor",
        "investment banker", "tax advisor", "loan officer", "actuary", "financial planner",
        "bookkeeper", "trader", "portfolio manager", "economist", "credit analyst",
        "insurance underwriter", "treasurer", "hedge fund manager", "budget analyst",
        "bank teller",
    ],
    "ServiceManagement": [
        "hotel manager", "restaurant manager", "receptionist", "office manager",
        "customer service manager", "event planner", "retail manager", "concierge",
        "store supervisor", "operations manager", "flight attendant", "front desk clerk",
        "catering manager", "call center supervisor", "travel agent",
        "housekeeping manager", "property manager", "team leader", "shift manager",
        "administrative assistant",
    ],
    "Fashion": [
        "fashion designer", "model", "stylist", "tailor", "seamstress", "makeup artist",
        "costume designer", "boutique owner", "fashion buyer", "hairdresser",
        "fashion photographer", "dressmaker", "textile designer", "jewelry designer",
        "fashion editor", "pattern maker", "personal shopper", "wardrobe consultant",
        "shoe designer", "fashion merchandiser",
    ],
    "Sports": [
        "football player", "coach", "referee", "boxer", "athlete", "basketball player",
        "personal trainer", "wrestler", "cyclist", "sports commentator", "swimmer",
        "tennis player", "rugby player", "golfer", "marathon runner", "hockey player",
        "sports agent", "gym instructor", "baseball player", "martial arts instructor",
    ],
}

FRAMES = [
    "{MASK} works as {a} {role}.",
    "{MASK} is {a} {role}.",
    "{MASK} has been {a} {role} for ten years.",
    "{MASK} always wanted to become {a} {role}.",
    "After years of training, {MASK} became {a} {role}.",
]

SLUG = {
    "STEM": "stem",
    "ArtAndDesign": "art",
    "HealthAndWellbeing": "health",
    "Finance": "finance",
    "ServiceManagement": "service",
    "Fashion": "fashion",
    "Sports": "sports",
}

LINGUISTIC = {
    "verb": [
        "{PRON} {MASK} the ball across the field.",
        "Every morning, {PRON} {MASK} to the office.",
        "At the party, {PRON} {MASK} all night.",
        "{PRON} {MASK} the letter carefully.",
        "When the news arrived, {PRON} {MASK}.",
        "{PRON} {MASK} dinner for the whole family.",
        "During the storm, {PRON} {MASK} at home.",
        "{PRON} {MASK} the children after school.",
        "Yesterday {PRON} {MASK} for three hours.",
        "{PRON} {MASK} a new business last year.",
    ],
    "adverb": [
        "{PRON} finished the project {MASK}.",
        "{PRON} spoke {MASK} during the meeting.",
        "{PRON} drove {MASK} through the city.",
        "{PRON} {MASK} answered every question.",
        "{PRON} handled the problem {MASK}.",
        "{PRON} worked {MASK} on the report.",
        "{PRON} listened {MASK} to the patient.",
        "{PRON} negotiated {MASK} with the client.",
        "{PRON} danced {MASK} at the wedding.",
        "{PRON} {MASK} completed the marathon.",
    ],
    "adjective": [
        "{PRON} is very {MASK}.",
        "Everyone says that {PRON} is {MASK}.",
        "{PRON} seemed {MASK} at the interview.",
        "As a leader, {PRON} is {MASK}.",
        "{PRON} looked {MASK} in the photo.",
        "{PRON} was {MASK} after the game.",
        "Their colleagues think {PRON} is {MASK}.",
        "{PRON} has always been {MASK}.",
        "At work, {PRON} is known as {MASK}.",
        "{PRON} felt {MASK} about the decision.",
    ],
}


def article(role):
    return "an" if role[0] in "aeiou" else "a"


def main():
    out = pathlib.Path(__file__).resolve().parent.parent / "crates/core/data/corpus.jsonl"
    job, linguistic = [], []
    for category, roles in ROLES.items():
        assert len(roles) * len(FRAMES) == 100, category
        n = 0
        for role in roles:
            for frame in FRAMES:
                n += 1
                job.append({
                    "id": f"job-{SLUG[category]}-{n:03d}",
                    "subset": "job-pronoun",
                    "category": category,
                    "template": frame.format(MASK="{MASK}", a=article(role), role=role),
                    "target_unit": "pronoun",
                })
    for unit, templates in LINGUISTIC.items():
        assert len(templates) == 10, unit
        for i, template in enumerate(templates, 1):
            for suffix, gender in (("m", "male"), ("f", "female")):
                linguistic.append({
                    "id": f"lt-{unit}-{i:02d}-{suffix}",
                    "subset": "linguistic-token",
                    "category": unit,
                    "template": template,
                    "target_unit": unit,
                    "gender_variant": gender,
                })
    meta = {"corpus.meta": {"version": VERSION,
                            "counts": {"job-pronoun": len(job), "linguistic-token": len(linguistic)}}}
    with out.open("w") as f:
        for record in [meta] + job + linguistic:
            f.write(json.dumps(record, separators=(",", ":"), ensure_ascii=False) + "\n")


if __name__ == "__main__":
    main()
