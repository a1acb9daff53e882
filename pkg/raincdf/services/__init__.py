from . import ingest, kdtree, linalg, scoring
