"""Regenerate the bundled Topology Zoo GraphML files from the ``topohub`` archive.

topohub (MIT) ships Topology Zoo graphs as networkx node-link JSON with
``pos = [lon, lat]``.  This writes them back out in the Zoo GraphML schema
(``Latitude``/``Longitude``/``label`` node keys) so the regular loader is the
only code path that ever reads a topology.

    pip install topohub
    python scripts/import_topohub.py Nsfnet Ans Chinanet
"""

import json
import sys
from importlib import resources
from pathlib import Path
from xml.sax.saxutils import escape

OUT = Path(__file__).resolve().parents[1] / "src" / "ctrlplace" / "data"

HEADER = """<?xml version="1.0" encoding="utf-8"?>
<graphml xmlns="http://graphml.graphdrawing.org/xmlns" xmlns:xsi="http://www.w3.org/2001/XMLSchema-instance" xsi:schemaLocation="http://graphml.graphdrawing.org/xmlns http://graphml.graphdrawing.org/xmlns/1.0/graphml.xsd">
  <key attr.name="Longitude" attr.type="double" for="node" id="d30" />
  <key attr.name="Latitude" attr.type="double" for="node" id="d29" />
  <key attr.name="label" attr.type="string" for="node" id="d32" />
  <key attr.name="Network" attr.type="string" for="graph" id="d10" />
  <key attr.name="Source" attr.type="string" for="graph" id="d11" />
  <graph edgedefault="undirected">
"""


def convert(name: str) -> Path:
    raw = resources.files("topohub").joinpath(f"data/topozoo/{name}.json").read_text()
    data = json.loads(raw)
    lines = [HEADER]
    lines.append(f'    <data key="d10">{escape(name)}</data>\n')
    lines.append('    <data key="d11">Internet Topology Zoo via topohub</data>\n')
    for node in data["nodes"]:
        lon, lat = node["pos"]
        lines.append(f'    <node id="{node["id"]}">\n')
        lines.append(f'      <data key="d30">{lon!r}</data>\n')
        lines.append(f'      <data key="d29">{lat!r}</data>\n')
        lines.append(f'      <data key="d32">{escape(node["name"])}</data>\n')
        lines.append("    </node>\n")
    for i, edge in enumerate(data["edges"]):
        lines.append(f'    <edge id="e{i}" source="{edge["source"]}" target="{edge["target"]}" />\n')
    lines.append("  </graph>\n</graphml>\n")
    path = OUT / f"{name}.graphml"
    path.write_text("".join(lines), encoding="utf-8")
    return path


if __name__ == "__main__":
    for name in sys.argv[1:] or ["Nsfnet", "Ans", "Chinanet"]:
        print(convert(name))
