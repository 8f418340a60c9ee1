//! Alice and Bob as network peers.
//!
//! Alice connects and sends HELLO; Bob answers with his own HELLO or an
//! ABORT. Then, per position, Alice sends pass 1, Bob answers with pass 2,
//! Alice sends pass 3. Alice closes with DONE and Bob acknowledges it.

use std::io::{Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::thread;
use std::time::{Duration, Instant};

use crate::config::Session;
use crate::protocol::{Decoded, Pass, PhotonMessage};
use crate::report::RunReport;

use super::frame::{read_frame, write_frame, AbortReason, Frame, FrameError, Hello, PROTOCOL_VERSION};
use super::NetError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Alice,
    Bob,
}

#[derive(Debug, Clone, Copy)]
pub struct PeerOptions {
    /// Per-frame read timeout; also bounds how long Alice retries connecting.
    pub timeout: Duration,
}

impl Default for PeerOptions {
    fn default() -> Self {
        PeerOptions {
            timeout: Duration::from_secs(10),
        }
    }
}

pub fn hello_for(session: &Session) -> Hello {
    Hello {
        version: PROTOCOL_VERSION,
        variant: session.variant().wire_code(),
        k: session.set().k() as u16,
        n: session.n() as u32,
    }
}

/// Checks a peer's HELLO against ours.
pub fn negotiate(ours: &Hello, theirs: &Hello) -> Result<(), AbortReason> {
    if theirs.version != ours.version {
        Err(AbortReason::Version)
    } else if theirs != ours {
        Err(AbortReason::ParameterMismatch)
    } else {
        Ok(())
    }
}

/// Sends ABORT best-effort and returns the error to report locally.
fn abort<S: Write>(stream: &mut S, reason: AbortReason, error: NetError) -> NetError {
    let _ = write_frame(stream, &Frame::Abort(reason));
    error
}

fn fail_frame<S: Write>(stream: &mut S, e: FrameError) -> NetError {
    let reason = AbortReason::for_error(&e);
    abort(stream, reason, NetError::Frame(e))
}

fn unexpected<S: Write>(stream: &mut S, expected: &'static str, got: &Frame) -> NetError {
    match got {
        Frame::Abort(reason) => NetError::Aborted(*reason),
        other => abort(
            stream,
            AbortReason::Protocol,
            NetError::Unexpected {
                expected,
                got: other.type_name(),
            },
        ),
    }
}

fn recv<S: Read + Write>(stream: &mut S) -> Result<Frame, NetError> {
    read_frame(stream).map_err(|e| fail_frame(stream, e))
}

fn recv_photon<S: Read + Write>(stream: &mut S, pass: Pass) -> Result<PhotonMessage, NetError> {
    match recv(stream)? {
        Frame::Photon(p) => {
            let photon = p.to_photon().map_err(|e| fail_frame(stream, e))?;
            if photon.pass != pass {
                return Err(abort(
                    stream,
                    AbortReason::Protocol,
                    NetError::Unexpected {
                        expected: "PHOTON of the next pass",
                        got: "PHOTON of another pass",
                    },
                ));
            }
            Ok(photon)
        }
        other => Err(unexpected(stream, "PHOTON", &other)),
    }
}

fn send<S: Write>(stream: &mut S, frame: &Frame) -> Result<(), NetError> {
    write_frame(stream, frame).map_err(NetError::Frame)
}

/// Alice's side over an established stream. Her report carries no decoded
/// fields.
pub fn run_alice<S: Read + Write>(stream: &mut S, session: &Session) -> Result<RunReport, NetError> {
    let started = Instant::now();
    let mut alice = session.alice()?;
    let ours = hello_for(session);
    send(stream, &Frame::Hello(ours))?;
    match recv(stream)? {
        Frame::Hello(theirs) => {
            if let Err(reason) = negotiate(&ours, &theirs) {
                return Err(abort(stream, reason, NetError::Mismatch(reason)));
            }
        }
        other => return Err(unexpected(stream, "HELLO", &other)),
    }
    for position in 1..=session.n() as u32 {
        let p1 = alice
            .prepare(session.message(), position)
            .map_err(|e| abort(stream, AbortReason::Protocol, e.into()))?;
        send(stream, &Frame::photon(&p1))?;
        let p2 = recv_photon(stream, Pass::Second)?;
        let p3 = alice
            .pass2(p2)
            .map_err(|e| abort(stream, AbortReason::Protocol, e.into()))?;
        send(stream, &Frame::photon(&p3))?;
    }
    send(stream, &Frame::Done)?;
    match recv(stream)? {
        Frame::Done => {}
        other => return Err(unexpected(stream, "DONE", &other)),
    }
    let mut report = RunReport::build(session, None, None);
    report.set_wall_clock(started.elapsed());
    Ok(report)
}

/// Bob's side over an accepted stream. He adopts the session id of the
/// first photon.
pub fn run_bob<S: Read + Write>(stream: &mut S, session: &Session) -> Result<RunReport, NetError> {
    let started = Instant::now();
    let mut bob = session.bob(None)?;
    let ours = hello_for(session);
    match recv(stream)? {
        Frame::Hello(theirs) => {
            if let Err(reason) = negotiate(&ours, &theirs) {
                return Err(abort(stream, reason, NetError::Mismatch(reason)));
            }
        }
        other => return Err(unexpected(stream, "HELLO", &other)),
    }
    send(stream, &Frame::Hello(ours))?;
    let mut outputs: Vec<Decoded> = Vec::with_capacity(session.n());
    for _ in 0..session.n() {
        let p1 = recv_photon(stream, Pass::First)?;
        let p2 = bob
            .pass1(p1)
            .map_err(|e| abort(stream, AbortReason::Protocol, e.into()))?;
        send(stream, &Frame::photon(&p2))?;
        let p3 = recv_photon(stream, Pass::Third)?;
        let out = bob
            .finish(p3)
            .map_err(|e| abort(stream, AbortReason::Protocol, e.into()))?;
        outputs.push(out);
    }
    match recv(stream)? {
        Frame::Done => send(stream, &Frame::Done)?,
        other => return Err(unexpected(stream, "DONE", &other)),
    }
    let mut report = RunReport::build(session, Some(&outputs), None);
    report.set_wall_clock(started.elapsed());
    Ok(report)
}

pub(crate) fn prepare_stream(stream: &TcpStream, opts: &PeerOptions) -> Result<(), NetError> {
    stream.set_read_timeout(Some(opts.timeout))?;
    stream.set_nodelay(true)?;
    Ok(())
}

/// Dials `endpoint`, retrying refused connections until the timeout.
pub fn connect(endpoint: impl ToSocketAddrs, opts: &PeerOptions) -> Result<TcpStream, NetError> {
    let addrs: Vec<SocketAddr> = endpoint.to_socket_addrs()?.collect();
    let deadline = Instant::now() + opts.timeout;
    loop {
        let mut last = None;
        for addr in &addrs {
            match TcpStream::connect_timeout(addr, opts.timeout) {
                Ok(s) => {
                    prepare_stream(&s, opts)?;
                    return Ok(s);
                }
                Err(e) => last = Some(e),
            }
        }
        if Instant::now() >= deadline {
            return Err(NetError::Connect(
                last.map_or_else(|| "no addresses".to_string(), |e| e.to_string()),
            ));
        }
        thread::sleep(Duration::from_millis(50));
    }
}

/// Accepts one connection on `listener` and runs Bob on it.
pub fn serve_bob(listener: &TcpListener, session: &Session, opts: &PeerOptions) -> Result<RunReport, NetError> {
    let (mut stream, _) = listener.accept()?;
    prepare_stream(&stream, opts)?;
    run_bob(&mut stream, session)
}

/// Bob listens on `endpoint`, Alice connects to it.
pub fn run_peer(role: Role, session: &Session, endpoint: &str, opts: &PeerOptions) -> Result<RunReport, NetError> {
    match role {
        Role::Bob => serve_bob(&TcpListener::bind(endpoint)?, session, opts),
        Role::Alice => run_alice(&mut connect(endpoint, opts)?, session),
    }
}
