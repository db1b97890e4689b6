"""Regenerates the binary GLB fixtures in this directory."""
import json
import struct
from pathlib import Path

HERE = Path(__file__).parent


def pad(b, fill):
    return b + fill * (-len(b) % 4)


def glb(doc, bin_chunk, version=2, magic=b"glTF"):
    j = pad(json.dumps(doc, separators=(",", ":")).encode(), b" ")
    body = struct.pack("<II", len(j), 0x4E4F534A) + j
    if bin_chunk is not None:
        bc = pad(bin_chunk, b"\0")
        body += struct.pack("<II", len(bc), 0x004E4942) + bc
    return magic + struct.pack("<II", version, 12 + len(body)) + body


def cube():
    pts = [(x, y, z) for z in (-0.5, 0.5) for y in (-0.5, 0.5) for x in (-0.5, 0.5)]
    tris = [
        (0, 2, 1), (1, 2, 3), (4, 5, 6), (5, 7, 6),
        (0, 1, 4), (1, 5, 4), (2, 6, 3), (3, 6, 7),
        (0, 4, 2), (2, 4, 6), (1, 3, 5), (3, 7, 5),
    ]
    pos = b"".join(struct.pack("<3f", *p) for p in pts)
    idx = b"".join(struct.pack("<3H", *t) for t in tris)
    bin_chunk = pos + idx
    doc = {
        "asset": {"version": "2.0"},
        "scene": 0,
        "scenes": [{"nodes": [0]}],
        "nodes": [{"mesh": 0}],
        "meshes": [{"primitives": [{"attributes": {"POSITION": 0}, "indices": 1, "mode": 4}]}],
        "buffers": [{"byteLength": len(bin_chunk)}],
        "bufferViews": [
            {"buffer": 0, "byteOffset": 0, "byteLength": len(pos)},
            {"buffer": 0, "byteOffset": len(pos), "byteLength": len(idx)},
        ],
        "accessors": [
            {"bufferView": 0, "componentType": 5126, "count": 8, "type": "VEC3",
             "min": [-0.5, -0.5, -0.5], "max": [0.5, 0.5, 0.5]},
            {"bufferView": 1, "componentType": 5123, "count": 36, "type": "SCALAR"},
        ],
    }
    return doc, bin_chunk


def main():
    doc, bin_chunk = cube()
    good = glb(doc, bin_chunk)
    (HERE / "cube.glb").write_bytes(good)
    (HERE / "bad_magic.glb").write_bytes(glb(doc, bin_chunk, magic=b"gLTF"))
    (HERE / "version1.glb").write_bytes(glb(doc, bin_chunk, version=1))
    (HERE / "truncated.glb").write_bytes(good[: len(good) - 40])
    (HERE / "notglb.bin").write_bytes(b"PK\x03\x04 definitely a zip file, not a model\n")


if __name__ == "__main__":
    main()
