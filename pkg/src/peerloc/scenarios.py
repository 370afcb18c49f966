"""Bundled scenario library mirroring the evaluation conditions.

Names: the multi-floor flagship run, single-environment variants, mobility
patterns (pairs / normal / stress), line-of-sight levels (los / mixed /
heavy-nlos), a single-user collaborative-tags scenario, and a noise-free
two-node toy for smoke checks.
"""

THREE_FLOOR = """
[scenario]
id = three-floor
duration_s = 600
mobility = random_walk

[nodes]
num_users = 5
num_tags = 9
user_floors = 0,1,2,0,1

[building]
name = three-floor

[seeds]
master = 1
"""

OFFICE_BUSY = """
[scenario]
id = office-busy
duration_s = 300
mobility = waypoint

[nodes]
num_users = 3
num_tags = 4

[building]
name = office

[seeds]
master = 2
"""

GARAGE_NLOS = """
[scenario]
id = garage-nlos
duration_s = 300
mobility = random_walk

[nodes]
num_users = 3
num_tags = 4

[building]
name = garage

[seeds]
master = 3
"""

OUTDOOR_OPEN = """
[scenario]
id = outdoor-open
duration_s = 300
mobility = random_walk

[nodes]
num_users = 3
num_tags = 0

[building]
name = outdoor-open

[seeds]
master = 4
"""

PAIRS = """
[scenario]
id = pairs
duration_s = 300
mobility = pairs

[nodes]
num_users = 4
num_tags = 0

[building]
name = office

[seeds]
master = 5
"""

NORMAL = """
[scenario]
id = normal
duration_s = 300
mobility = random_walk

[nodes]
num_users = 4
num_tags = 0

[building]
name = office

[seeds]
master = 5
"""

STRESS = """
[scenario]
id = stress
duration_s = 300
mobility = stress

[nodes]
num_users = 4
num_tags = 0

[building]
name = office

[seeds]
master = 5
"""

LOS = """
[scenario]
id = los
duration_s = 300
mobility = random_walk

[nodes]
num_users = 4
num_tags = 0

[building]
name = office-open

[seeds]
master = 6
"""

MIXED = """
[scenario]
id = mixed
duration_s = 600
mobility = random_walk

[nodes]
num_users = 4
num_tags = 0

[building]
name = office

[seeds]
master = 6
"""

HEAVY_NLOS = """
[scenario]
id = heavy-nlos
duration_s = 300
mobility = random_walk

[nodes]
num_users = 4
num_tags = 0
user_floors = 0,1,2,0

[building]
name = three-floor

[seeds]
master = 6
"""

COLLAB_TAGS = """
[scenario]
id = collab-tags
duration_s = 600
mobility = random_walk

[nodes]
num_users = 1
num_tags = 9
user_floors = 1

[building]
name = three-floor

[seeds]
master = 7
"""

TWO_STATIC = """
[scenario]
id = two-static
duration_s = 60
mobility = static

[nodes]
num_users = 2
num_tags = 0

[building]
name = office-open

[noise]
vio_sigma_xyz = 0
vio_sigma_theta = 0
uwb_sigma_r = 0
uwb_p_nlos = 0

[seeds]
master = 8
"""

BUNDLED = {
    "three-floor": THREE_FLOOR,
    "office-busy": OFFICE_BUSY,
    "garage-nlos": GARAGE_NLOS,
    "outdoor-open": OUTDOOR_OPEN,
    "pairs": PAIRS,
    "normal": NORMAL,
    "stress": STRESS,
    "los": LOS,
    "mixed": MIXED,
    "heavy-nlos": HEAVY_NLOS,
    "collab-tags": COLLAB_TAGS,
    "two-static": TWO_STATIC,
}
