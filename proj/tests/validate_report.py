"""Validates JSON-lines detection reports against the published schema."""
import json
import sys

import jsonschema

schema = json.load(open(sys.argv[1]))
count = 0
for path in sys.argv[2:]:
    for line in open(path):
        if line.strip():
            jsonschema.validate(json.loads(line), schema)
            count += 1
if count == 0:
    sys.exit("no reports to validate")
print(f"{count} reports valid")
