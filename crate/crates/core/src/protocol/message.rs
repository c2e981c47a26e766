//! Peering messages and their canonical byte layout.
//!
//! ```text
//! tag:u8 | from:[u8;32] | to:[u8;32] | body
//!   0x01 request   body = public_salt:[u8;32] | updates:LEB128 u32 | flags:u8
//!   0x02 response  body = accepted:u8 (0 or 1)
//!   0x03 drop      body = (empty)
//! ```
//!
//! Flag bit 0 marks a request sent from a freshly provisioned salt chain.
//! All other flag bits must be zero.

use thiserror::Error;

use crate::identity::{NodeId, Salt, DIGEST_LEN};

const TAG_REQUEST: u8 = 0x01;
const TAG_RESPONSE: u8 = 0x02;
const TAG_DROP: u8 = 0x03;
const FLAG_NEW_CHAIN: u8 = 0x01;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecodeError {
    #[error("message truncated")]
    Truncated,
    #[error("unknown message tag {0:#04x}")]
    UnknownTag(u8),
    #[error("{0} trailing bytes after message")]
    TrailingBytes(usize),
    #[error("varint does not fit in u32")]
    VarintOverflow,
    #[error("invalid boolean byte {0:#04x}")]
    InvalidBool(u8),
    #[error("unknown request flags {0:#04x}")]
    UnknownFlags(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PeeringRequest {
    pub public_salt: Salt,
    /// Salt updates since this requester last contacted the recipient.
    pub updates_since_last: u32,
    /// Set when the requester switched to a new chain since that contact.
    pub new_chain: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MessageBody {
    Request(PeeringRequest),
    Response { accepted: bool },
    Drop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Message {
    pub from: NodeId,
    pub to: NodeId,
    pub body: MessageBody,
}

impl Message {
    pub fn request(from: NodeId, to: NodeId, request: PeeringRequest) -> Self {
        Self { from, to, body: MessageBody::Request(request) }
    }

    pub fn response(from: NodeId, to: NodeId, accepted: bool) -> Self {
        Self { from, to, body: MessageBody::Response { accepted } }
    }

    pub fn drop(from: NodeId, to: NodeId) -> Self {
        Self { from, to, body: MessageBody::Drop }
    }

    pub fn is_drop(&self) -> bool {
        matches!(self.body, MessageBody::Drop)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(1 + 2 * DIGEST_LEN + DIGEST_LEN + 6);
        let tag = match self.body {
            MessageBody::Request(_) => TAG_REQUEST,
            MessageBody::Response { .. } => TAG_RESPONSE,
            MessageBody::Drop => TAG_DROP,
        };
        out.push(tag);
        out.extend_from_slice(self.from.as_bytes());
        out.extend_from_slice(self.to.as_bytes());
        match self.body {
            MessageBody::Request(req) => {
                out.extend_from_slice(req.public_salt.as_bytes());
                write_varint(&mut out, req.updates_since_last);
                out.push(if req.new_chain { FLAG_NEW_CHAIN } else { 0 });
            }
            MessageBody::Response { accepted } => out.push(u8::from(accepted)),
            MessageBody::Drop => {}
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader { buf: bytes };
        let tag = r.byte()?;
        let from = NodeId::from_bytes(r.array()?);
        let to = NodeId::from_bytes(r.array()?);
        let body = match tag {
            TAG_REQUEST => {
                let public_salt = Salt::public(r.array()?);
                let updates_since_last = r.varint()?;
                let flags = r.byte()?;
                if flags & !FLAG_NEW_CHAIN != 0 {
                    return Err(DecodeError::UnknownFlags(flags));
                }
                MessageBody::Request(PeeringRequest {
                    public_salt,
                    updates_since_last,
                    new_chain: flags & FLAG_NEW_CHAIN != 0,
                })
            }
            TAG_RESPONSE => match r.byte()? {
                0 => MessageBody::Response { accepted: false },
                1 => MessageBody::Response { accepted: true },
                b => return Err(DecodeError::InvalidBool(b)),
            },
            TAG_DROP => MessageBody::Drop,
            t => return Err(DecodeError::UnknownTag(t)),
        };
        if !r.buf.is_empty() {
            return Err(DecodeError::TrailingBytes(r.buf.len()));
        }
        Ok(Self { from, to, body })
    }
}

fn write_varint(out: &mut Vec<u8>, mut v: u32) {
    while v >= 0x80 {
        out.push((v as u8) | 0x80);
        v >>= 7;
    }
    out.push(v as u8);
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl Reader<'_> {
    fn byte(&mut self) -> Result<u8, DecodeError> {
        let (&b, rest) = self.buf.split_first().ok_or(DecodeError::Truncated)?;
        self.buf = rest;
        Ok(b)
    }

    fn array(&mut self) -> Result<[u8; DIGEST_LEN], DecodeError> {
        if self.buf.len() < DIGEST_LEN {
            return Err(DecodeError::Truncated);
        }
        let (head, rest) = self.buf.split_at(DIGEST_LEN);
        self.buf = rest;
        Ok(head.try_into().expect("length checked"))
    }

    fn varint(&mut self) -> Result<u32, DecodeError> {
        let mut value: u64 = 0;
        for shift in (0..35).step_by(7) {
            let b = self.byte()?;
            value |= u64::from(b & 0x7f) << shift;
            if b & 0x80 == 0 {
                return u32::try_from(value).map_err(|_| DecodeError::VarintOverflow);
            }
        }
        Err(DecodeError::VarintOverflow)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn id(b: u8) -> NodeId {
        NodeId::from_bytes([b; 32])
    }

    #[test]
    fn request_golden_layout() {
        let msg = Message::request(
            id(0x11),
            id(0x22),
            PeeringRequest { public_salt: Salt::public([0x33; 32]), updates_since_last: 300, new_chain: false },
        );
        let bytes = msg.encode();
        assert_eq!(bytes.len(), 1 + 32 + 32 + 32 + 2 + 1);
        assert_eq!(bytes[0], 0x01);
        assert_eq!(&bytes[1..33], &[0x11; 32]);
        assert_eq!(&bytes[33..65], &[0x22; 32]);
        assert_eq!(&bytes[65..97], &[0x33; 32]);
        // 300 = 0b10_0101100 -> 0xac 0x02
        assert_eq!(&bytes[97..], &[0xac, 0x02, 0x00]);
    }

    #[test]
    fn response_and_drop_layout() {
        let r = Message::response(id(1), id(2), true).encode();
        assert_eq!(r.len(), 66);
        assert_eq!((r[0], r[65]), (0x02, 0x01));
        let d = Message::drop(id(1), id(2)).encode();
        assert_eq!(d.len(), 65);
        assert_eq!(d[0], 0x03);
    }

    #[test]
    fn malformed_inputs() {
        let mut good = Message::response(id(1), id(2), false).encode();
        assert_eq!(Message::decode(&good[..10]), Err(DecodeError::Truncated));
        good[65] = 7;
        assert_eq!(Message::decode(&good), Err(DecodeError::InvalidBool(7)));
        let mut bad_tag = Message::drop(id(1), id(2)).encode();
        bad_tag[0] = 9;
        assert_eq!(Message::decode(&bad_tag), Err(DecodeError::UnknownTag(9)));
        let mut trailing = Message::drop(id(1), id(2)).encode();
        trailing.push(0);
        assert_eq!(Message::decode(&trailing), Err(DecodeError::TrailingBytes(1)));
        let mut overflow = Message::drop(id(1), id(2)).encode();
        overflow[0] = 0x01;
        overflow.extend_from_slice(&[0; 32]);
        overflow.extend_from_slice(&[0xff, 0xff, 0xff, 0xff, 0x7f, 0x00]);
        assert_eq!(Message::decode(&overflow), Err(DecodeError::VarintOverflow));
    }

    proptest! {
        #[test]
        fn codec_round_trips(from in any::<[u8; 32]>(), to in any::<[u8; 32]>(), salt in any::<[u8; 32]>(),
                             m in any::<u32>(), flag in any::<bool>(), kind in 0u8..3) {
            let body = match kind {
                0 => MessageBody::Request(PeeringRequest { public_salt: Salt::public(salt), updates_since_last: m, new_chain: flag }),
                1 => MessageBody::Response { accepted: flag },
                _ => MessageBody::Drop,
            };
            let msg = Message { from: NodeId::from_bytes(from), to: NodeId::from_bytes(to), body };
            prop_assert_eq!(Message::decode(&msg.encode()), Ok(msg));
        }
    }
}
