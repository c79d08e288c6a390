from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PERSON_NAMES = (
    "alice bob carol dave erin frank grace heidi ivan judy kevin laura mallory nina oscar peggy "
    "quentin rupert sybil trent ursula victor walter xavier yolanda zach abigail bruno celine "
    "dmitri elena felix gloria hugo irene jasper kira leon mona nestor olga pablo quinn rosa "
    "soren tamsin ulric vera wendell ximena yusuf zelda arlo bianca cyrus daria emil fiona "
    "gunnar hana ines jonas kofi lena milo nadia otto priya ravi selma tobias uma"
).split()
ORG_NAMES = (
    "acme globex initech umbrella hooli vandelay stark wayne cyberdyne tyrell soylent oscorp "
    "wonka monarch aperture gringotts dunder massive nakatomi pendant"
).split()
TIME_NAMES = (
    "january february march april may june july august september october november december"
).split()
TOPIC_NAMES = (
    "budget hiring launch merger audit picnic security roadmap taxes training pricing travel "
    "payroll lawsuit marketing offsite"
).split()

KIND_POOLS = {
    "person": PERSON_NAMES,
    "organization": ORG_NAMES,
    "time": TIME_NAMES,
    "topic": TOPIC_NAMES,
}


class WorldError(ValueError):
    pass


@dataclass(frozen=True)
class Email:
    sender: str
    recipient: str
    topic: str
    time: str


@dataclass(frozen=True)
class World:
    persons: tuple[str, ...]
    organizations: tuple[str, ...]
    times: tuple[str, ...]  # chronological
    topics: tuple[str, ...]
    employer: dict = field(hash=False, compare=True)  # person -> organization
    emails: tuple[Email, ...] = ()

    def entities(self, kind: str) -> tuple[str, ...]:
        return {
            "person": self.persons,
            "organization": self.organizations,
            "time": self.times,
            "topic": self.topics,
        }[kind]

    def kind_of(self, token: str):
        for kind in KIND_POOLS:
            if token in self.entities(kind):
                return kind
        return None

    def time_rank(self, t: str) -> int:
        return self.times.index(t)

    def employees(self, org: str) -> list[str]:
        return [p for p in self.persons if self.employer[p] == org]

    def check(self) -> "World":
        for kind in KIND_POOLS:
            ents = self.entities(kind)
            if len(set(ents)) != len(ents):
                raise WorldError(f"duplicate {kind} names")
        for p, o in self.employer.items():
            if p not in self.persons or o not in self.organizations:
                raise WorldError(f"employment fact references unknown entity ({p}, {o})")
        for e in self.emails:
            if (e.sender not in self.persons or e.recipient not in self.persons
                    or e.topic not in self.topics or e.time not in self.times):
                raise WorldError(f"email fact references unknown entity {e}")
        return self


def generate_world(seed: int, sizes: dict, emails_per_person: int = 6) -> World:
    """Deterministic world from (seed, per-kind counts)."""
    for kind in KIND_POOLS:
        n = sizes.get(kind, 0)
        if n < 1:
            raise WorldError(f"need at least one {kind}")
        if n > len(KIND_POOLS[kind]):
            raise WorldError(f"at most {len(KIND_POOLS[kind])} {kind} names available, asked for {n}")
    rng = np.random.default_rng(seed)

    def pick(kind):
        pool = KIND_POOLS[kind]
        idx = rng.choice(len(pool), size=sizes[kind], replace=False)
        return tuple(pool[i] for i in sorted(idx))

    persons = pick("person")
    orgs = pick("organization")
    times = pick("time")  # pool order is chronological
    topics = pick("topic")
    employer = {}
    for i, p in enumerate(persons):
        # first pass covers every organization when there are enough people
        employer[p] = orgs[i] if i < len(orgs) else orgs[int(rng.integers(len(orgs)))]
    emails = []
    for s in persons:
        for _ in range(emails_per_person):
            r = persons[int(rng.integers(len(persons)))]
            emails.append(Email(s, r, topics[int(rng.integers(len(topics)))], times[int(rng.integers(len(times)))]))
    # every topic and time is exercised at least once
    for i, t in enumerate(topics):
        e = emails[i % len(emails)]
        emails[i % len(emails)] = Email(e.sender, e.recipient, t, e.time)
    for i, t in enumerate(times):
        j = (i + len(topics)) % len(emails)
        e = emails[j]
        emails[j] = Email(e.sender, e.recipient, e.topic, t)
    return World(persons, orgs, times, topics, employer, tuple(emails)).check()


DEFAULT_WORLD_SIZES = {"person": 40, "organization": 12, "time": 12, "topic": 14}
