"""Test fixture writer for classic-pcap CSI captures.

Builds byte-exact Ethernet/IPv4/UDP captures around CSI payloads in the
default frame layout, so parser output can be checked value-for-value
against the frames that went in.
"""

from __future__ import annotations

import struct


def csi_payload(pairs, chanspec=0xD826, seq=0, magic=b"\x11\x11") -> bytes:
    """One CSI payload: 18-byte header + int16 (real, imag) pairs."""
    header = magic + struct.pack(
        "<bB6sHHHH",
        -42,              # rssi
        0,                # frame control
        b"\xaa\xbb\xcc\xdd\xee\xff",
        seq,
        0,                # core/spatial
        chanspec,
        0x0001,           # chip version
    )
    body = b"".join(struct.pack("<hh", int(re), int(im)) for re, im in pairs)
    return header + body


def udp_packet(payload: bytes, dst_port=5500, src_port=9999) -> bytes:
    """Ethernet + IPv4 + UDP wrapping for one payload."""
    udp = struct.pack(">HHHH", src_port, dst_port, 8 + len(payload), 0) + payload
    total = 20 + len(udp)
    ip = struct.pack(
        ">BBHHHBBH4s4s",
        0x45, 0, total, 0, 0, 64, 17, 0,
        bytes([192, 168, 1, 10]), bytes([255, 255, 255, 255]),
    ) + udp
    eth = b"\xff" * 6 + b"\x02" * 6 + b"\x08\x00" + ip
    return eth


def write_pcap(path, packets: list[bytes]) -> None:
    """Classic little-endian pcap with Ethernet linktype."""
    with open(path, "wb") as fh:
        fh.write(struct.pack("<IHHiIII", 0xA1B2C3D4, 2, 4, 0, 0, 65535, 1))
        for i, frame in enumerate(packets):
            fh.write(struct.pack("<IIII", i, 0, len(frame), len(frame)))
            fh.write(frame)


def write_csi_capture(path, frames, dst_port=5500, chanspec=0xD826,
                      extra_packets=(), truncate_last_bytes=0) -> None:
    """Capture with one CSI packet per frame; frames are lists of (re, im).

    ``truncate_last_bytes`` cuts bytes off the final CSI payload to make
    a malformed frame; ``extra_packets`` appends arbitrary raw packets.
    """
    packets = []
    for seq, pairs in enumerate(frames):
        payload = csi_payload(pairs, chanspec=chanspec, seq=seq)
        if truncate_last_bytes and seq == len(frames) - 1:
            payload = payload[: len(payload) - truncate_last_bytes]
        packets.append(udp_packet(payload, dst_port=dst_port))
    packets.extend(extra_packets)
    write_pcap(path, packets)
