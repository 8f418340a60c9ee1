//! Eve as a proxy on the photon wire.
//!
//! Alice dials the proxy, the proxy dials Bob. HELLO, DONE and ABORT frames
//! pass through byte for byte; PHOTON frames go through the configured
//! adversary channel and are routed by the pass number it returns, exactly
//! as in the in-process exchange. The classical side is modeled as a
//! tamper-free pass-through.

use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::thread;

use crate::adversary::{self, AttackKind, AttackSpec, EveRecord};
use crate::phases::{PhaseSet, SecretAngles};
use crate::protocol::{Channel, Direction, Pass, Variant};

use super::frame::{encode_frame, read_frame_raw, write_frame, write_raw, AbortReason, Frame, FrameError};
use super::peer::{connect, prepare_stream, PeerOptions};
use super::NetError;

#[derive(Debug, Clone, Default)]
pub struct ProxyOptions {
    pub peer: PeerOptions,
    /// Whether Alice's message is bit-encoded; picks Eve's default MITM
    /// readout for the qubit variants, as the in-process channel does.
    pub bit_encoded: bool,
    /// Handed to Eve only in analysis mode (`secret_known`).
    pub secret: Option<SecretAngles>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Alice,
    Bob,
}

struct Ends<'a, A, B> {
    alice: &'a mut A,
    bob: &'a mut B,
}

impl<A: Read + Write, B: Read + Write> Ends<'_, A, B> {
    fn read(&mut self, side: Side) -> Result<(Frame, Vec<u8>), FrameError> {
        match side {
            Side::Alice => read_frame_raw(self.alice),
            Side::Bob => read_frame_raw(self.bob),
        }
    }

    fn write(&mut self, side: Side, bytes: &[u8]) -> Result<(), NetError> {
        match side {
            Side::Alice => write_raw(self.alice, bytes),
            Side::Bob => write_raw(self.bob, bytes),
        }
        .map_err(NetError::Frame)
    }

    /// Best-effort ABORT to both ends.
    fn abort(&mut self, reason: AbortReason, error: NetError) -> NetError {
        let _ = write_frame(self.alice, &Frame::Abort(reason));
        let _ = write_frame(self.bob, &Frame::Abort(reason));
        error
    }

    fn recv(&mut self, side: Side) -> Result<(Frame, Vec<u8>), NetError> {
        self.read(side).map_err(|e| {
            let reason = AbortReason::for_error(&e);
            self.abort(reason, NetError::Frame(e))
        })
    }
}

fn other(side: Side) -> Side {
    match side {
        Side::Alice => Side::Bob,
        Side::Bob => Side::Alice,
    }
}

/// Relays one session between an accepted Alice stream and a dialed Bob
/// stream, returning what Eve recorded.
pub fn relay<A: Read + Write, B: Read + Write>(
    alice: &mut A,
    bob: &mut B,
    spec: &AttackSpec,
    opts: &ProxyOptions,
) -> Result<EveRecord, NetError> {
    let mut ends = Ends { alice, bob };
    let transparent = spec.kind == AttackKind::None;

    let (frame, raw) = ends.recv(Side::Alice)?;
    let Frame::Hello(hello) = frame else {
        return Err(ends.abort(
            AbortReason::Protocol,
            NetError::Unexpected {
                expected: "HELLO",
                got: frame.type_name(),
            },
        ));
    };
    let variant = Variant::from_wire_code(hello.variant);
    let set = PhaseSet::new(u32::from(hello.k)).ok();
    let (Some(variant), Some(set)) = (variant, set) else {
        return Err(ends.abort(AbortReason::ParameterMismatch, NetError::Mismatch(AbortReason::ParameterMismatch)));
    };
    let mut channel = adversary::channel_for(spec, variant, set, opts.bit_encoded, opts.secret.as_ref())
        .map_err(|e| ends.abort(AbortReason::ParameterMismatch, e.into()))?;

    ends.write(Side::Bob, &raw)?;
    let (reply, raw) = ends.recv(Side::Bob)?;
    ends.write(Side::Alice, &raw)?;
    match reply {
        Frame::Hello(_) => {}
        Frame::Abort(reason) => return Err(NetError::Aborted(reason)),
        other => {
            return Err(ends.abort(
                AbortReason::Protocol,
                NetError::Unexpected {
                    expected: "HELLO",
                    got: other.type_name(),
                },
            ))
        }
    }

    let mut next = Side::Alice;
    loop {
        let (frame, raw) = ends.recv(next)?;
        match frame {
            Frame::Photon(wire) => {
                let photon = wire.to_photon().map_err(|e| ends.abort(AbortReason::Malformed, e.into()))?;
                let direction = match next {
                    Side::Alice => Direction::AliceToBob,
                    Side::Bob => Direction::BobToAlice,
                };
                let out = if transparent {
                    photon
                } else {
                    channel
                        .deliver(photon, direction)
                        .map_err(|e| ends.abort(AbortReason::Protocol, NetError::Channel(e)))?
                };
                let bytes = if transparent { raw } else { encode_frame(&Frame::photon(&out)) };
                let (dest, then) = match out.pass {
                    Pass::First => (Side::Bob, Side::Bob),
                    Pass::Second => (Side::Alice, Side::Alice),
                    Pass::Third => (Side::Bob, Side::Alice),
                };
                ends.write(dest, &bytes)?;
                next = then;
            }
            Frame::Done => {
                let peer = other(next);
                ends.write(peer, &raw)?;
                let (ack, raw) = ends.recv(peer)?;
                ends.write(next, &raw)?;
                return match ack {
                    Frame::Done => Ok(channel
                        .record()
                        .cloned()
                        .unwrap_or_else(|| EveRecord::new(AttackKind::None, false))),
                    Frame::Abort(reason) => Err(NetError::Aborted(reason)),
                    other => Err(ends.abort(
                        AbortReason::Protocol,
                        NetError::Unexpected {
                            expected: "DONE",
                            got: other.type_name(),
                        },
                    )),
                };
            }
            Frame::Abort(reason) => {
                ends.write(other(next), &raw)?;
                return Err(NetError::Aborted(reason));
            }
            Frame::Hello(_) => {
                return Err(ends.abort(
                    AbortReason::Protocol,
                    NetError::Unexpected {
                        expected: "PHOTON or DONE",
                        got: "HELLO",
                    },
                ))
            }
        }
    }
}

/// Serves one Alice connection on `listener`. If `upstream` cannot be
/// reached the connection is refused with ABORT and closed.
pub fn run_eve_proxy(
    spec: &AttackSpec,
    listener: &TcpListener,
    upstream: impl ToSocketAddrs,
    opts: &ProxyOptions,
) -> Result<EveRecord, NetError> {
    let (mut alice, _) = listener.accept()?;
    prepare_stream(&alice, &opts.peer)?;
    proxy_connection(spec, &mut alice, upstream, opts)
}

fn proxy_connection(
    spec: &AttackSpec,
    alice: &mut TcpStream,
    upstream: impl ToSocketAddrs,
    opts: &ProxyOptions,
) -> Result<EveRecord, NetError> {
    let single_try = PeerOptions {
        timeout: opts.peer.timeout.min(std::time::Duration::from_secs(1)),
    };
    let mut bob = match connect(upstream, &single_try) {
        Ok(s) => s,
        Err(e) => {
            let _ = write_frame(alice, &Frame::Abort(AbortReason::Upstream));
            return Err(e);
        }
    };
    prepare_stream(&bob, &opts.peer)?;
    relay(alice, &mut bob, spec, opts)
}

/// Serves `sessions` connections concurrently, each with its own adversary
/// state. Results are in accept order.
pub fn serve_eve_proxy(
    spec: &AttackSpec,
    listener: &TcpListener,
    upstream: &str,
    opts: &ProxyOptions,
    sessions: usize,
) -> Vec<Result<EveRecord, NetError>> {
    thread::scope(|scope| {
        let mut handles = Vec::with_capacity(sessions);
        for _ in 0..sessions {
            match listener.accept() {
                Ok((mut alice, _)) => handles.push(scope.spawn(move || {
                    prepare_stream(&alice, &opts.peer)?;
                    proxy_connection(spec, &mut alice, upstream, opts)
                })),
                Err(e) => {
                    let err: Result<EveRecord, NetError> = Err(e.into());
                    handles.push(scope.spawn(move || err));
                }
            }
        }
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(NetError::Connect("proxy worker panicked".into()))))
            .collect()
    })
}
