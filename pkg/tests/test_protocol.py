import math

import pytest

from curbsim import protocol as proto
from curbsim.errors import ProtocolError


def test_encode_decode_round_trip():
    msg = proto.message(proto.CMD, vehicle_id="V1", seq=3, timestamp=1.25,
                        payload={"throttle": 0.5, "steering": -0.2})
    out = proto.decode(proto.encode(msg))
    assert out == msg


def test_decode_fills_defaults():
    out = proto.decode('{"type": "RESET"}')
    assert out["vehicle_id"] is None
    assert out["seq"] == 0
    assert out["payload"] == {}


def test_decode_rejects_garbage():
    with pytest.raises(ProtocolError) as e:
        proto.decode("not json at all{")
    assert e.value.code == proto.BAD_MESSAGE


def test_decode_rejects_unknown_type():
    with pytest.raises(ProtocolError):
        proto.decode('{"type": "TELEPORT"}')


def test_decode_rejects_typeless():
    with pytest.raises(ProtocolError):
        proto.decode('{"seq": 1}')


def test_lidar_infinity_encodes_as_null():
    wire = proto.lidar_to_wire([1.5, math.inf, 0.2])
    assert wire == [1.5, None, 0.2]
    back = proto.lidar_from_wire(wire)
    assert back[0] == 1.5 and math.isinf(back[1]) and back[2] == 0.2
