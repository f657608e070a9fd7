"""Exception hierarchy shared across the bridge.

Tool handlers report ``type(exc).__name__`` to the client, so class names
are part of the external surface.
"""


class Mcp2OscError(Exception):
    """Base class for every domain error raised by the bridge."""


# codec
class OscError(Mcp2OscError):
    pass


class InvalidAddress(OscError):
    pass


class UnencodableArgument(OscError):
    pass


class NestingTooDeep(OscError):
    pass


class OscDecodeError(OscError):
    pass


class Truncated(OscDecodeError):
    pass


class MissingTypeTagString(OscDecodeError):
    pass


class UnknownTypeTag(OscDecodeError):
    pass


class TrailingGarbage(OscDecodeError):
    pass


class UnknownPacketType(OscDecodeError):
    pass


class MalformedPacket(OscDecodeError):
    pass


class ImmediateHasNoWalltime(OscError):
    pass


# address
class MalformedPattern(Mcp2OscError):
    pass


class TemplateError(Mcp2OscError):
    pass


class UnboundPlaceholder(TemplateError):
    pass


class CardinalityExceeded(TemplateError):
    pass


# transport
class TransportError(Mcp2OscError):
    pass


class InvalidConfig(TransportError):
    pass


class AllPortsBusy(TransportError):
    pass


class DatagramTooLarge(TransportError):
    pass


class NetworkError(TransportError):
    pass


# message log
class LogError(Mcp2OscError):
    pass


class StorageFull(LogError):
    pass


class LogIoError(LogError):
    pass


# pattern store
class PatternStoreError(Mcp2OscError):
    pass


class InvalidRecord(PatternStoreError):
    pass


class NotFound(PatternStoreError):
    pass


class Collision(PatternStoreError):
    pass


# control ops
class ValidationRefused(Mcp2OscError):
    def __init__(self, message, violations=()):
        super().__init__(message)
        self.violations = list(violations)


class TooManyActiveStreams(Mcp2OscError):
    pass


class InvalidSpec(Mcp2OscError):
    pass


class UnknownStream(Mcp2OscError):
    pass


class DiscoveryError(Mcp2OscError):
    pass


class Unreachable(DiscoveryError):
    pass


class NotOscQuery(DiscoveryError):
    pass


class MalformedNamespace(DiscoveryError):
    pass


# peer simulator
class PortBusy(Mcp2OscError):
    pass


class BadFixture(Mcp2OscError):
    pass


# transcript replay
class MatcherFailed(Mcp2OscError):
    pass
