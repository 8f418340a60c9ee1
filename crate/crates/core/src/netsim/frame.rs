//! Length-prefixed binary frames.
//!
//! ```text
//! length: u32 BE   byte count of type + body
//! type:   u8       0x01 HELLO, 0x02 PHOTON, 0x03 DONE, 0x04 ABORT
//! body:
//!   HELLO   version u8, variant u8, k u16 BE, n u32 BE
//!   PHOTON  session id [u8; 16], position u32 BE, pass u8,
//!           amp_h re, amp_h im, amp_v re, amp_v im as f64 BE
//!   DONE    (empty)
//!   ABORT   reason u8
//! ```
//!
//! A whole frame, length prefix included, is at most [`MAX_FRAME`] bytes.

use std::io::{self, Read, Write};

use num_complex::Complex64;
use thiserror::Error;

use crate::protocol::{Pass, PhotonMessage, SessionId};
use crate::statekit::{PureState, NORM_TOLERANCE};

pub const PROTOCOL_VERSION: u8 = 1;
pub const MAX_FRAME: usize = 4096;

const HELLO: u8 = 0x01;
const PHOTON: u8 = 0x02;
const DONE: u8 = 0x03;
const ABORT: u8 = 0x04;

const HELLO_BODY: usize = 8;
const PHOTON_BODY: usize = 16 + 4 + 1 + 32;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("short read: needed {needed} bytes, got {got}")]
    ShortRead { needed: usize, got: usize },
    #[error("bad length field {0}")]
    BadLength(u32),
    #[error("frame of {0} bytes exceeds the {MAX_FRAME}-byte limit")]
    Oversize(usize),
    #[error("unknown frame type 0x{0:02x}")]
    UnknownType(u8),
    #[error("frame type 0x{kind:02x} has a {len}-byte body")]
    BadBody { kind: u8, len: usize },
    #[error("invalid photon: {0}")]
    InvalidPhoton(String),
    #[error("timed out waiting for a frame")]
    Timeout,
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Hello {
    pub version: u8,
    /// Variant wire code: 1 classical, 2 quantum, 3 auth.
    pub variant: u8,
    pub k: u16,
    pub n: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WirePhoton {
    pub session_id: [u8; 16],
    pub position: u32,
    pub pass: u8,
    /// `[amp_h.re, amp_h.im, amp_v.re, amp_v.im]`
    pub amps: [f64; 4],
}

impl WirePhoton {
    pub fn from_photon(p: &PhotonMessage) -> Self {
        let (h, v) = (p.state.amp_h(), p.state.amp_v());
        WirePhoton {
            session_id: p.session_id.0,
            position: p.position,
            pass: p.pass.number(),
            amps: [h.re, h.im, v.re, v.im],
        }
    }

    pub fn to_photon(&self) -> Result<PhotonMessage, FrameError> {
        let pass = Pass::from_number(self.pass)
            .ok_or_else(|| FrameError::InvalidPhoton(format!("pass {}", self.pass)))?;
        let [hr, hi, vr, vi] = self.amps;
        let state = PureState::new(Complex64::new(hr, hi), Complex64::new(vr, vi))
            .map_err(|e| FrameError::InvalidPhoton(e.to_string()))?;
        Ok(PhotonMessage {
            session_id: SessionId(self.session_id),
            position: self.position,
            pass,
            state,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AbortReason {
    ParameterMismatch,
    Version,
    Protocol,
    Timeout,
    Malformed,
    Upstream,
    Other(u8),
}

impl AbortReason {
    pub fn code(self) -> u8 {
        match self {
            AbortReason::ParameterMismatch => 1,
            AbortReason::Version => 2,
            AbortReason::Protocol => 3,
            AbortReason::Timeout => 4,
            AbortReason::Malformed => 5,
            AbortReason::Upstream => 6,
            AbortReason::Other(c) => c,
        }
    }

    pub fn from_code(code: u8) -> Self {
        match code {
            1 => AbortReason::ParameterMismatch,
            2 => AbortReason::Version,
            3 => AbortReason::Protocol,
            4 => AbortReason::Timeout,
            5 => AbortReason::Malformed,
            6 => AbortReason::Upstream,
            c => AbortReason::Other(c),
        }
    }

    /// The reason a local failure is reported to the peer with.
    pub fn for_error(e: &FrameError) -> Self {
        match e {
            FrameError::Timeout => AbortReason::Timeout,
            _ => AbortReason::Malformed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Frame {
    Hello(Hello),
    Photon(WirePhoton),
    Done,
    Abort(AbortReason),
}

impl Frame {
    pub fn photon(p: &PhotonMessage) -> Self {
        Frame::Photon(WirePhoton::from_photon(p))
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Frame::Hello(_) => "HELLO",
            Frame::Photon(_) => "PHOTON",
            Frame::Done => "DONE",
            Frame::Abort(_) => "ABORT",
        }
    }
}

pub fn encode_frame(frame: &Frame) -> Vec<u8> {
    let mut body = Vec::with_capacity(PHOTON_BODY + 1);
    match frame {
        Frame::Hello(h) => {
            body.push(HELLO);
            body.push(h.version);
            body.push(h.variant);
            body.extend_from_slice(&h.k.to_be_bytes());
            body.extend_from_slice(&h.n.to_be_bytes());
        }
        Frame::Photon(p) => {
            body.push(PHOTON);
            body.extend_from_slice(&p.session_id);
            body.extend_from_slice(&p.position.to_be_bytes());
            body.push(p.pass);
            for a in p.amps {
                body.extend_from_slice(&a.to_be_bytes());
            }
        }
        Frame::Done => body.push(DONE),
        Frame::Abort(r) => {
            body.push(ABORT);
            body.push(r.code());
        }
    }
    let mut out = Vec::with_capacity(4 + body.len());
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(&body);
    out
}

fn check_length(length: u32) -> Result<usize, FrameError> {
    if length == 0 {
        return Err(FrameError::BadLength(length));
    }
    let total = length as usize + 4;
    if total > MAX_FRAME {
        return Err(FrameError::Oversize(total));
    }
    Ok(length as usize)
}

fn be_u32(b: &[u8]) -> u32 {
    u32::from_be_bytes(b.try_into().expect("4 bytes"))
}

/// Decodes `type + body` (the bytes after the length prefix).
fn decode_payload(payload: &[u8]) -> Result<Frame, FrameError> {
    let (&kind, body) = payload.split_first().ok_or(FrameError::BadLength(0))?;
    let expect = |len: usize| {
        if body.len() == len {
            Ok(())
        } else {
            Err(FrameError::BadBody { kind, len: body.len() })
        }
    };
    match kind {
        HELLO => {
            expect(HELLO_BODY)?;
            Ok(Frame::Hello(Hello {
                version: body[0],
                variant: body[1],
                k: u16::from_be_bytes([body[2], body[3]]),
                n: be_u32(&body[4..8]),
            }))
        }
        PHOTON => {
            expect(PHOTON_BODY)?;
            let mut amps = [0.0; 4];
            for (i, a) in amps.iter_mut().enumerate() {
                let at = 21 + 8 * i;
                *a = f64::from_be_bytes(body[at..at + 8].try_into().expect("8 bytes"));
            }
            let photon = WirePhoton {
                session_id: body[..16].try_into().expect("16 bytes"),
                position: be_u32(&body[16..20]),
                pass: body[20],
                amps,
            };
            let norm: f64 = amps.iter().map(|a| a * a).sum();
            // Written so that NaN amplitudes fail too.
            let normalized = (norm - 1.0).abs() <= NORM_TOLERANCE;
            if !normalized {
                return Err(FrameError::InvalidPhoton(format!("norm² = {norm}")));
            }
            if Pass::from_number(photon.pass).is_none() {
                return Err(FrameError::InvalidPhoton(format!("pass {}", photon.pass)));
            }
            Ok(Frame::Photon(photon))
        }
        DONE => {
            expect(0)?;
            Ok(Frame::Done)
        }
        ABORT => {
            expect(1)?;
            Ok(Frame::Abort(AbortReason::from_code(body[0])))
        }
        other => Err(FrameError::UnknownType(other)),
    }
}

/// Decodes exactly one complete frame.
pub fn decode_frame(bytes: &[u8]) -> Result<Frame, FrameError> {
    if bytes.len() < 4 {
        return Err(FrameError::ShortRead {
            needed: 4,
            got: bytes.len(),
        });
    }
    let length = be_u32(&bytes[..4]);
    let len = check_length(length)?;
    let payload = &bytes[4..];
    if payload.len() < len {
        return Err(FrameError::ShortRead {
            needed: len + 4,
            got: bytes.len(),
        });
    }
    if payload.len() > len {
        return Err(FrameError::BadLength(length));
    }
    decode_payload(payload)
}

fn read_full(r: &mut impl Read, buf: &mut [u8], already: usize) -> Result<(), FrameError> {
    let mut got = 0;
    while got < buf.len() {
        match r.read(&mut buf[got..]) {
            Ok(0) => {
                return Err(FrameError::ShortRead {
                    needed: already + buf.len(),
                    got: already + got,
                })
            }
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {
                return Err(FrameError::Timeout)
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(())
}

/// Reads one frame's raw bytes, length prefix included, checking only the
/// length field.
pub fn read_raw(r: &mut impl Read) -> Result<Vec<u8>, FrameError> {
    let mut head = [0u8; 4];
    read_full(r, &mut head, 0)?;
    let len = check_length(u32::from_be_bytes(head))?;
    let mut out = vec![0u8; 4 + len];
    out[..4].copy_from_slice(&head);
    read_full(r, &mut out[4..], 4)?;
    Ok(out)
}

/// Reads and decodes one frame; also returns its raw bytes.
pub fn read_frame_raw(r: &mut impl Read) -> Result<(Frame, Vec<u8>), FrameError> {
    let raw = read_raw(r)?;
    let frame = decode_payload(&raw[4..])?;
    Ok((frame, raw))
}

pub fn read_frame(r: &mut impl Read) -> Result<Frame, FrameError> {
    read_frame_raw(r).map(|(f, _)| f)
}

pub fn write_raw(w: &mut impl Write, bytes: &[u8]) -> Result<(), FrameError> {
    w.write_all(bytes)?;
    w.flush()?;
    Ok(())
}

pub fn write_frame(w: &mut impl Write, frame: &Frame) -> Result<(), FrameError> {
    write_raw(w, &encode_frame(frame))
}
