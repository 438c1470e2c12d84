"""Builds manifest.jsonl for each fixture.

Plans are picked from a generated corpus by question text; expected rows
come from hand-written SQL run directly against the seed data, with
median, standard deviation and correlation computed here in Python.

usage: python3 oracle.py <dir with generated <name>.json.questions files>
"""
import json
import math
import os
import sqlite3
import statistics
import sys

HERE = os.path.dirname(os.path.abspath(__file__))


def db(name):
    conn = sqlite3.connect(":memory:")
    with open(os.path.join(HERE, name, "seed.sql")) as f:
        conn.executescript(f.read())
    return conn


def rows(sql, *params):
    return lambda c: [list(r) for r in c.execute(sql, params)]


def median_of(sql, *params):
    def run(c):
        vals = [r[0] for r in c.execute(sql, params) if r[0] is not None]
        return [[statistics.median(vals) if vals else None]]
    return run


def grouped_median(sql, *params):
    """sql yields (key, value) ordered by key."""
    def run(c):
        groups = {}
        for k, v in c.execute(sql, params):
            groups.setdefault(k, [])
            if v is not None:
                groups[k].append(float(v))
        return [[k, statistics.median(vs) if vs else None] for k, vs in groups.items()]
    return run


def pstdev_of(sql, *params):
    def run(c):
        vals = [float(r[0]) for r in c.execute(sql, params) if r[0] is not None]
        return [[statistics.pstdev(vals) if vals else None]]
    return run


def pearson_of(sql, *params):
    def run(c):
        pairs = [(float(x), float(y)) for x, y in c.execute(sql, params) if x is not None and y is not None]
        if len(pairs) < 2:
            return [[None]]
        xs, ys = zip(*pairs)
        mx, my = sum(xs) / len(xs), sum(ys) / len(ys)
        sxx = sum((x - mx) ** 2 for x in xs)
        syy = sum((y - my) ** 2 for y in ys)
        if sxx <= 0 or syy <= 0:
            return [[None]]
        sxy = sum((x - mx) * (y - my) for x, y in pairs)
        return [[max(-1.0, min(1.0, sxy / math.sqrt(sxx * syy)))]]
    return run


def greater(sql_a, a, sql_b, b):
    def run(c):
        x = c.execute(sql_a, (a,)).fetchone()[0]
        y = c.execute(sql_b, (b,)).fetchone()[0]
        return [[x > y]]
    return run


JUDGE_CASES = """FROM judge j JOIN judge_on_case l ON l.judge_id = j.id
JOIN court_case c ON c.id = l.case_id"""

ENTRIES = {
    "emissions": [
        ("plan:carbon.plan", True, rows(
            "SELECT year, AVG(amount) FROM carbon_emission WHERE country = ? GROUP BY year ORDER BY year",
            "United States of America")),
        ("What is the average amount of carbon emissions for country of Canada?", False,
         rows("SELECT AVG(amount) FROM carbon_emission WHERE country = ?", "Canada")),
        ("What is the count of amount of carbon emissions for year of 2020?", False,
         rows("SELECT COUNT(amount) FROM carbon_emission WHERE year = 2020")),
        ("What is the count of unique amount of carbon emissions for year of 2019?", False,
         rows("SELECT COUNT(DISTINCT amount) FROM carbon_emission WHERE year = 2019")),
        ("What is the one amount of carbon emissions for country of United States of America?", False,
         rows("SELECT MIN(amount) FROM carbon_emission WHERE country = ?", "United States of America")),
        ("What is the median amount of carbon emissions for country of Canada?", False,
         median_of("SELECT amount FROM carbon_emission WHERE country = ?", "Canada")),
        ("What is the list of amount of carbon emissions for country of United States of America?", False,
         rows("SELECT GROUP_CONCAT(CAST(amount AS TEXT), ', ') FROM "
              "(SELECT amount FROM carbon_emission WHERE country = ? ORDER BY id)", "United States of America")),
        ("What is the standard deviation of amount of carbon emissions for country of Mexico?", False,
         pstdev_of("SELECT amount FROM carbon_emission WHERE country = ?", "Mexico")),
        ("What is the sum of amount of carbon emissions grouped by year?", False,
         rows("SELECT year, SUM(amount) FROM carbon_emission GROUP BY year")),
        ("What is the median amount of carbon emissions grouped by year for country of Mexico?", False,
         grouped_median("SELECT year, amount FROM carbon_emission WHERE country = ? ORDER BY year", "Mexico")),
        ("For year sorted in descending order and limited to the top results, what is the sum of amount of carbon emissions?", True,
         rows("SELECT year, SUM(amount) FROM carbon_emission GROUP BY year ORDER BY year DESC LIMIT 5")),
        ("What is the amount of carbon emissions for country of United States of America?", False,
         rows("SELECT amount FROM carbon_emission WHERE country = ?", "United States of America")),
    ],
    "legal": [
        ("What is the average case duration grouped by case type?", False,
         rows("SELECT t.name, AVG(c.duration) FROM court_case c JOIN case_type t ON t.id = c.case_type_id GROUP BY t.name")),
        ("What is the average case duration grouped by year for name of colleen kollar-kotelly?", False,
         rows(f"SELECT c.year, AVG(c.duration) {JUDGE_CASES} WHERE j.name = ? GROUP BY c.year", "colleen kollar-kotelly")),
        ("What is the max case duration for name of tanya chutkan?", False,
         rows(f"SELECT MAX(c.duration) {JUDGE_CASES} WHERE j.name = ?", "tanya chutkan")),
        ("What is the sum of case duration for name of rudolph contreras?", False,
         rows(f"SELECT SUM(c.duration) {JUDGE_CASES} WHERE j.name = ?", "rudolph contreras")),
        ("What is the min case duration for case type of appeal?", False,
         rows("SELECT MIN(c.duration) FROM court_case c JOIN case_type t ON t.id = c.case_type_id WHERE t.name = 'appeal'")),
        ("What is the count of unique case duration for case name of case 004?", False,
         rows("SELECT COUNT(DISTINCT duration) FROM court_case WHERE case_name = 'case 004'")),
        ("What is the case type for case name of case 001?", False,
         rows("SELECT t.name FROM court_case c JOIN case_type t ON t.id = c.case_type_id WHERE c.case_name = 'case 001'")),
        ("What is the gender for name of ketanji jackson?", False,
         rows("SELECT gender FROM judge WHERE name = 'ketanji jackson'")),
        ("For case type sorted in descending order and limited to the top results, what is the average case duration?", True,
         rows("SELECT t.name, AVG(c.duration) FROM court_case c JOIN case_type t ON t.id = c.case_type_id "
              "GROUP BY t.name ORDER BY t.name DESC LIMIT 5")),
        ("For year sorted in descending order and limited to the top results, what is the sum of case duration for name of rudolph contreras?", True,
         rows(f"SELECT c.year, SUM(c.duration) {JUDGE_CASES} WHERE j.name = ? GROUP BY c.year ORDER BY c.year DESC LIMIT 5",
              "rudolph contreras")),
        ("What is the standard deviation of case duration for case type of civil?", False,
         pstdev_of("SELECT c.duration FROM court_case c JOIN case_type t ON t.id = c.case_type_id WHERE t.name = 'civil'")),
        ("What is the median case duration for name of colleen kollar-kotelly?", False,
         median_of(f"SELECT c.duration {JUDGE_CASES} WHERE j.name = ?", "colleen kollar-kotelly")),
        ("What is the list of case duration for name of amit mehta?", False,
         rows(f"SELECT GROUP_CONCAT(CAST(d AS TEXT), ', ') FROM (SELECT c.duration AS d {JUDGE_CASES} "
              "WHERE j.name = ? ORDER BY c.id)", "amit mehta")),
    ],
    "incidents": [
        ('What is the count of unique incident id for weapon type containing "handgun"?', False,
         rows("SELECT COUNT(DISTINCT incident_id) FROM incident WHERE weapon_type LIKE '%handgun%'")),
        ('What is the count of incident id for weapon type containing "knife"?', False,
         rows("SELECT COUNT(incident_id) FROM incident WHERE weapon_type LIKE '%knife%'")),
        ('Is the count of unique incident id for weapon type containing "handgun" greater than count of unique incident id for weapon type containing "rifle"?', False,
         greater("SELECT COUNT(DISTINCT incident_id) FROM incident WHERE instr(lower(weapon_type), ?) > 0", "handgun",
                 "SELECT COUNT(DISTINCT incident_id) FROM incident WHERE instr(lower(weapon_type), ?) > 0", "rifle")),
        ('Is the count of incident id for city containing "chicago" greater than count of incident id for city containing "denver"?', False,
         greater("SELECT COUNT(incident_id) FROM incident WHERE instr(lower(city), ?) > 0", "chicago",
                 "SELECT COUNT(incident_id) FROM incident WHERE instr(lower(city), ?) > 0", "denver")),
        ("What is the correlation between number of injured and number of victims?", False,
         pearson_of("SELECT injured, victims FROM incident")),
        ("What is the correlation between number of injured and number of victims for weapon type of rifle?", False,
         pearson_of("SELECT injured, victims FROM incident WHERE weapon_type = 'rifle'")),
        ("What is the correlation between number of injured and number of victims for incident id of 1010?", False,
         pearson_of("SELECT injured, victims FROM incident WHERE incident_id = 1010")),
        ("What is the average number of injured grouped by city?", False,
         rows("SELECT city, AVG(injured) FROM incident GROUP BY city")),
        ("What is the sum of number of victims for weapon type of knife?", False,
         rows("SELECT SUM(victims) FROM incident WHERE weapon_type = 'knife'")),
        ("For city sorted in descending order and limited to the top results, what is the average number of injured?", True,
         rows("SELECT city, AVG(injured) FROM incident GROUP BY city ORDER BY city DESC LIMIT 5")),
        ("What is the weapon type for incident id of 1031?", False,
         rows("SELECT weapon_type FROM incident WHERE incident_id = 1031")),
        ("What is the average number of victims for weapon type of shotgun?", False,
         rows("SELECT AVG(victims) FROM incident WHERE weapon_type = 'shotgun'")),
    ],
    "housing": [
        ("For date sorted in descending order and limited to the top results, what is the average rent for region name of United States?", True,
         rows("SELECT date, AVG(rent) FROM rent_index WHERE region_name = ? GROUP BY date ORDER BY date DESC LIMIT 5",
              "United States")),
        ("What is the average rent for region name of San Francisco, CA?", False,
         rows("SELECT AVG(rent) FROM rent_index WHERE region_name = ?", "San Francisco, CA")),
    ],
    "education": [
        ("What is the correlation between total per pupil expenditure and percentage of students with an sat-math scores that exceed standards for county of DuPage County?", False,
         pearson_of("SELECT s.per_pupil_expenditure, s.sat_math_pct FROM county c JOIN school s ON s.county_id = c.id "
                    "WHERE c.name = ?", "DuPage County")),
        ("What is the average student enrollment grouped by school type?", False,
         rows("SELECT school_type, AVG(enrollment) FROM school GROUP BY school_type")),
    ],
    "healthcare": [
        ("What is the disease for stay id of 31945330?", False,
         rows("SELECT disease FROM stay WHERE stay_id = 31945330")),
        ("What is the average heart rate grouped by disease?", False,
         rows("SELECT disease, AVG(heart_rate) FROM stay GROUP BY disease")),
    ],
}


def main(corpus_dir):
    for name, entries in ENTRIES.items():
        with open(os.path.join(corpus_dir, f"{name}.json.questions")) as f:
            corpus = [json.loads(line) for line in f]
        by_text = {}
        for r in corpus:
            by_text.setdefault(r["question_text"], []).append(r)
        conn = db(name)
        out = []
        for selector, ordered, oracle in entries:
            if selector.startswith("plan:"):
                with open(os.path.join(HERE, name, selector[5:])) as f:
                    record = {"question_id": None, "template_id": None, "question_text": None, "plan_text": f.read()}
            else:
                matches = by_text.get(selector)
                if not matches or len(matches) != 1:
                    sys.exit(f"{name}: {len(matches or [])} questions match {selector!r}")
                record = dict(matches[0])
            record["ordered"] = ordered
            record["rows"] = oracle(conn)
            out.append(record)
        with open(os.path.join(HERE, name, "manifest.jsonl"), "w") as f:
            for r in out:
                f.write(json.dumps(r) + "\n")
        print(f"{name}: {len(out)} entries")


if __name__ == "__main__":
    main(sys.argv[1])
