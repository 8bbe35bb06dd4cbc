#!/usr/bin/env python3
"""Writes data/population70.json and data/population_constraints.json.

The household layout is fixed by hand so every demographic total comes out
exact; names, ages and narrative fields are filled deterministically.
"""
import itertools
import json
import os
import random

HERE = os.path.dirname(os.path.abspath(__file__))
DATA = os.path.join(HERE, "..", "data")

WORK_TIMES = {
    "Factory": "8:00-17:00",
    "Office": "8:00-17:00",
    "Coffee shop": "7:00-16:00",
    "Hospital": "7:30-17:30",
    "Gym": "6:30-15:30",
    "Food court": "10:00-19:00",
    "Amusement park": "9:00-18:00",
    "Museum": "9:00-17:00",
    "Cinema": "11:00-20:00",
    "Supermarket": "8:30-17:30",
    "School": "7:45-16:00",
}
OCCUPATION = {
    "Factory": ["machine operator", "production engineer", "quality inspector", "line supervisor"],
    "Office": ["accountant", "project manager", "software developer", "HR specialist"],
    "Coffee shop": ["barista"],
    "Hospital": ["nurse", "physician"],
    "Gym": ["fitness instructor"],
    "Food court": ["cook", "restaurant manager"],
    "Amusement park": ["park manager", "ride technician"],
    "Museum": ["museum curator", "exhibit designer"],
    "Cinema": ["cinema manager", "projectionist"],
    "Supermarket": ["cashier", "store manager"],
    "School": ["teacher"],
}
WORKERS = {
    "Coffee shop": 3, "Factory": 20, "Hospital": 3, "Gym": 3, "Office": 17, "Food court": 3,
    "Amusement park": 2, "Museum": 2, "Cinema": 2, "Supermarket": 3, "School": 2,
}

FEMALE = ["Isabella", "Gloria", "Sophia", "Rachel", "Hannah", "Patricia", "Michelle", "Ashley",
          "Nina", "Elizabeth", "Catherine", "Emily", "Olivia", "Grace", "Laura", "Maria",
          "Julia", "Chloe", "Sarah", "Anna", "Lily", "Megan", "Rose", "Claire", "Diana",
          "Fiona", "Helen", "Irene", "Jane", "Karen", "Linda", "Monica", "Nora", "Paula",
          "Ruth", "Tina"]
MALE = ["Michael", "Robert", "David", "Christopher", "Miguel", "Raymond", "Benjamin", "Brian",
        "Frank", "Marcus", "Oliver", "James", "Daniel", "Thomas", "Kevin", "Jason", "Eric",
        "Henry", "Ian", "Jack", "Leo", "Mark", "Nathan", "Peter", "Samuel", "Victor",
        "Walter", "Adam", "George", "Paul", "Steven", "Tony", "Aaron", "Carl"]
SURNAMES = ["Rodriguez", "Campbell", "Chen", "Nguyen", "Thompson", "Wilson", "Johnson",
            "Harris", "Foster", "Martinez", "Evans", "Taylor", "Garcia", "Scott", "Young",
            "Green", "Adams", "Baker", "Clark", "Davis", "Edwards", "Fisher", "Gray",
            "Hughes", "Irwin", "Jenkins", "King", "Lewis", "Moore", "Nelson", "Owens",
            "Parker", "Quinn", "Reed", "Stewart", "Turner", "Underwood", "Vance", "Walker",
            "Xu", "Yates", "Zimmerman", "Brooks"]
INNATE = ["friendly, outgoing, hospitable", "calm, methodical, reliable", "curious, energetic",
          "punctual, organized, practical", "easygoing, sociable", "thoughtful, patient",
          "ambitious, focused", "cheerful, spontaneous"]
LIFESTYLE = ["goes to bed around 11pm, wakes up around 6am", "early riser, up at 5:30am",
             "goes to bed around midnight, wakes up around 6:30am",
             "keeps a regular schedule, asleep by 10:30pm"]


def households():
    """(kind, size, vehicles, licensed adults, income, home)."""
    hh = []
    # couple + two children
    hh.append(("quad", 4, 2, 1, "high", "Uptown apartment"))
    # couple + one child
    for i in range(8):
        vehicles = 1 if i in (0, 4) else 2
        licensed = 2 if vehicles == 1 or i in (1, 2, 5, 6) else 1
        income = "high" if i < 3 else "medium"
        home = "Uptown apartment" if i < 4 else "Midtown apartment"
        hh.append(("trio", 3, vehicles, licensed, income, home))
    # couples
    for i in range(8):
        vehicles = 1 if i == 5 else 2
        licensed = 2 if vehicles == 1 or i in (0, 3, 4, 6) else 1
        income = "high" if i < 2 else "medium"
        home = "Uptown apartment" if i < 4 else "Midtown apartment"
        hh.append(("couple", 2, vehicles, licensed, income, home))
    # singles: first four have no car; low income for the first ten
    for i in range(26):
        vehicles = 0 if i < 4 else 1
        licensed = 0 if i < 4 else 1
        income = "low" if i < 10 else "medium"
        home = "Uptown apartment" if i % 2 == 0 and i < 24 else "Midtown apartment"
        hh.append(("single", 1, vehicles, licensed, income, home))
    return hh


def main():
    rng = random.Random(20250310)
    hh = households()
    work_pool = [f for f, n in WORKERS.items() for _ in range(n)]
    rng.shuffle(work_pool)
    female = itertools.cycle(FEMALE)
    male = itertools.cycle(MALE)
    surnames = iter(SURNAMES)
    single_ix = 0
    people = []
    for hid, (kind, size, vehicles, licensed, income, home) in enumerate(hh, start=1):
        surname = next(surnames)
        members = []
        if kind == "single":
            # 14 of 26 singles are women, spread evenly
            gender = "female" if (single_ix * 14) // 26 != ((single_ix + 1) * 14) // 26 else "male"
            single_ix += 1
            members.append(("single", gender))
        else:
            members.append(("husband", "male"))
            members.append(("wife", "female"))
            if size == 4:
                members += [("son", "male"), ("daughter", "female")]
            elif size == 3:
                members.append(("son", "male") if hid % 2 == 0 else ("daughter", "female"))
        lic_left = licensed
        for role, gender in members:
            first = next(female) if gender == "female" else next(male)
            child = role in ("son", "daughter")
            p = {
                "name": f"{first} {surname}",
                "gender": gender,
                "age": rng.randint(6, 15) if child else rng.randint(24, 62),
                "family_role": role,
                "licensed_driver": False,
                "work_facility": "none",
                "occupation": "student" if child else "",
                "work_time": "none",
                "preferences_in_transportation": "",
                "innate": rng.choice(INNATE),
                "lifestyle": rng.choice(LIFESTYLE),
                "home_facility": home,
                "household_income": income,
                "friends": [],
                "other_description": "",
                "household_id": f"H{hid:02d}",
                "household_vehicles": vehicles,
            }
            if not child:
                if lic_left > 0:
                    p["licensed_driver"] = True
                    lic_left -= 1
                work = work_pool.pop()
                p["work_facility"] = work
                p["occupation"] = rng.choice(OCCUPATION[work])
                p["work_time"] = WORK_TIMES[work]
                if p["licensed_driver"] and vehicles > 0:
                    p["preferences_in_transportation"] = rng.choice(
                        ["prefer to travel alone and safer routes", "prefers driving for flexibility",
                         "values a predictable commute"])
                else:
                    p["preferences_in_transportation"] = "relies on public transit"
                p["other_description"] = (f"{first} works as a {p['occupation']} at the {work} "
                                          f"and lives in the {home}.")
            else:
                p["other_description"] = f"{first} goes to school and lives in the {home}."
            people.append(p)

    # friends: two per adult among other adults, deterministic ring
    adult_names = [p["name"] for p in people if p["family_role"] not in ("son", "daughter")]
    for p in people:
        if p["family_role"] in ("son", "daughter"):
            continue
        k = adult_names.index(p["name"])
        p["friends"] = [adult_names[(k + 7) % len(adult_names)], adult_names[(k + 13) % len(adult_names)]]

    constraints = {
        "total": 70,
        "gender": {"female": 36, "male": 34},
        "age_group": {"young": 60, "children": 10},
        "family_role": {"single": 26, "husband": 17, "wife": 17, "son": 5, "daughter": 5},
        "families": 43,
        "family_size": {"1": 26, "2": 8, "3": 8, "4": 1},
        "household_income": {"low": 10, "medium": 43, "high": 17},
        "licensed_drivers": 50,
        "vehicles_per_family": {"0": 4, "1": 25, "2": 14},
        "workers": WORKERS,
        "residents": {"Uptown apartment": 36, "Midtown apartment": 34},
    }
    with open(os.path.join(DATA, "population70.json"), "w") as f:
        json.dump({"profiles": people}, f, indent=1)
    with open(os.path.join(DATA, "population_constraints.json"), "w") as f:
        json.dump(constraints, f, indent=1)


if __name__ == "__main__":
    main()
