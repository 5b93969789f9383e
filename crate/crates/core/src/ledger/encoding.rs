//! Canonical byte encoding and hash chaining.
//!
//! Events are hashed over a canonical encoding of their JSON form: object
//! keys sorted bytewise, every scalar and key length-prefixed. The encoding is
//! defined on `serde_json::Value`, so an exported NDJSON line can be re-hashed
//! without knowing the payload schema.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;
use sha2::{Digest as _, Sha256};

/// 32-byte SHA-256 digest, rendered as lowercase hex.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub const ZERO: Digest = Digest([0u8; 32]);

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, hex::FromHexError> {
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out)?;
        Ok(Digest(out))
    }

    pub fn of_bytes(bytes: &[u8]) -> Self {
        Digest(Sha256::digest(bytes).into())
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", &self.to_hex()[..16])
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Digest {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Digest::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

fn put_len(out: &mut Vec<u8>, len: usize) {
    out.extend_from_slice(&(len as u64).to_be_bytes());
}

fn put_bytes(out: &mut Vec<u8>, bytes: &[u8]) {
    put_len(out, bytes.len());
    out.extend_from_slice(bytes);
}

/// Appends the canonical encoding of `value` to `out`.
pub fn encode_canonical(value: &Value, out: &mut Vec<u8>) {
    match value {
        Value::Null => out.push(b'n'),
        Value::Bool(b) => {
            out.push(b'b');
            out.push(u8::from(*b));
        }
        Value::Number(n) => {
            out.push(b'i');
            put_bytes(out, n.to_string().as_bytes());
        }
        Value::String(s) => {
            out.push(b's');
            put_bytes(out, s.as_bytes());
        }
        Value::Array(items) => {
            out.push(b'a');
            put_len(out, items.len());
            for item in items {
                encode_canonical(item, out);
            }
        }
        Value::Object(map) => {
            out.push(b'o');
            put_len(out, map.len());
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            for key in keys {
                put_bytes(out, key.as_bytes());
                encode_canonical(&map[key], out);
            }
        }
    }
}

/// Hash of one chain link: `SHA-256(prev || canonical(record))`, where
/// `record` is the object `{seq, tick, kind, payload}`.
pub fn chain_hash(prev: &Digest, seq: u64, tick: u64, kind: &str, payload: &Value) -> Digest {
    let mut record = serde_json::Map::new();
    record.insert("seq".into(), Value::from(seq));
    record.insert("tick".into(), Value::from(tick));
    record.insert("kind".into(), Value::from(kind));
    record.insert("payload".into(), payload.clone());

    let mut buf = Vec::with_capacity(256);
    encode_canonical(&Value::Object(record), &mut buf);

    let mut hasher = Sha256::new();
    hasher.update(prev.0);
    hasher.update(&buf);
    Digest(hasher.finalize().into())
}
