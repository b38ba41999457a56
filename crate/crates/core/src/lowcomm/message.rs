//! Messages, transcripts and the logical wire format.
//!
//! Bit layout: `Propose` and `Dart` carry no tag (their position in the
//! exchange is fixed) and encode the item as a big-endian `⌈log2 n⌉`-bit
//! field followed by the numerator as a big-endian `⌈log2(D + 1)⌉`-bit field.
//! `Approve` is the single bit `1`, `Reject` the single bit `0`.

use serde::{Deserialize, Serialize};

use crate::error::{CouplingError, Result};
use crate::numeric::ceil_log2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Party {
    Alice,
    Bob,
}

/// One protocol message. Numerators are in grid units of `1 / D`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Message {
    /// Alice's sample and its grid probability.
    Propose {
        index: usize,
        prob_numerator: u64,
    },
    Approve,
    Reject,
    /// Bob's dart cell and the cumulative mass below it.
    Dart {
        index: usize,
        cum_numerator: u64,
    },
}

impl Message {
    /// Logical size in bits for a session over `n` items with grid
    /// denominator `d`.
    pub fn bits(&self, n: usize, d: u64) -> u64 {
        match self {
            Message::Approve | Message::Reject => 1,
            Message::Propose { .. } | Message::Dart { .. } => {
                u64::from(ceil_log2(n as u64)) + u64::from(ceil_log2(d + 1))
            }
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Message::Propose { .. } => "propose",
            Message::Approve => "approve",
            Message::Reject => "reject",
            Message::Dart { .. } => "dart",
        }
    }
}

/// JSON framing of a single message: `{"sender":"alice","type":"propose",
/// "index":k,"numerator":m}`. `Dart` uses `numerator` for its cumulative
/// mass; verdicts omit both fields.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireRecord {
    pub sender: Party,
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub index: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub numerator: Option<u64>,
}

impl WireRecord {
    pub fn from_message(sender: Party, msg: &Message) -> Self {
        let (index, numerator) = match *msg {
            Message::Propose {
                index,
                prob_numerator,
            } => (Some(index), Some(prob_numerator)),
            Message::Dart {
                index,
                cum_numerator,
            } => (Some(index), Some(cum_numerator)),
            Message::Approve | Message::Reject => (None, None),
        };
        Self {
            sender,
            kind: msg.kind().to_string(),
            index,
            numerator,
        }
    }

    pub fn to_message(&self) -> Result<(Party, Message)> {
        let need = |v: Option<u64>, what: &str| {
            v.ok_or_else(|| {
                CouplingError::ProtocolViolation(format!("{} without {what}", self.kind))
            })
        };
        let msg = match self.kind.as_str() {
            "propose" => Message::Propose {
                index: need(self.index.map(|i| i as u64), "index")? as usize,
                prob_numerator: need(self.numerator, "numerator")?,
            },
            "dart" => Message::Dart {
                index: need(self.index.map(|i| i as u64), "index")? as usize,
                cum_numerator: need(self.numerator, "numerator")?,
            },
            "approve" => Message::Approve,
            "reject" => Message::Reject,
            other => {
                return Err(CouplingError::ProtocolViolation(format!(
                    "unknown message type {other}"
                )))
            }
        };
        Ok((self.sender, msg))
    }
}

/// Final line of a JSON-lines transcript dump.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptTrailer {
    #[serde(rename = "type")]
    pub kind: String,
    pub messages: usize,
    pub dart_rounds: u64,
    pub total_bits: u64,
}

/// Ordered record of one session.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Transcript {
    messages: Vec<(Party, Message)>,
    dart_rounds: u64,
    total_bits: u64,
}

impl Transcript {
    /// Builds a transcript, accounting bits for `n` items and grid
    /// denominator `d`.
    pub fn new(messages: Vec<(Party, Message)>, n: usize, d: u64) -> Self {
        let dart_rounds = messages
            .iter()
            .filter(|(_, m)| matches!(m, Message::Dart { .. }))
            .count() as u64;
        let total_bits = messages.iter().map(|(_, m)| m.bits(n, d)).sum();
        Self {
            messages,
            dart_rounds,
            total_bits,
        }
    }

    pub fn messages(&self) -> &[(Party, Message)] {
        &self.messages
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    pub fn dart_rounds(&self) -> u64 {
        self.dart_rounds
    }

    pub fn total_bits(&self) -> u64 {
        self.total_bits
    }

    /// Rounds in the coarser accounting where the opening exchange is one
    /// round and each dart throw is one more.
    pub fn rounds(&self) -> u64 {
        1 + self.dart_rounds
    }

    /// Checks the exchange grammar:
    /// `Propose (Approve | Reject Dart (Reject Dart)* Approve)`, with senders
    /// Alice, Bob, Bob, Alice, ... as the protocol dictates.
    pub fn check_complete(&self) -> Result<()> {
        let msgs = &self.messages;
        let bad = |why: &str| Err(CouplingError::ProtocolViolation(why.to_string()));
        match msgs.first() {
            Some((Party::Alice, Message::Propose { .. })) => {}
            None => return Err(CouplingError::IncompleteTranscript),
            _ => return bad("transcript must open with Alice's proposal"),
        }
        match msgs.get(1) {
            None => return Err(CouplingError::IncompleteTranscript),
            Some((Party::Bob, Message::Approve)) => {
                return if msgs.len() == 2 {
                    Ok(())
                } else {
                    bad("messages after Bob's approval")
                };
            }
            Some((Party::Bob, Message::Reject)) => {}
            _ => return bad("second message must be Bob's verdict"),
        }
        let mut i = 2;
        loop {
            match msgs.get(i) {
                Some((Party::Bob, Message::Dart { .. })) => {}
                None => return Err(CouplingError::IncompleteTranscript),
                _ => return bad("expected Bob's dart"),
            }
            match msgs.get(i + 1) {
                Some((Party::Alice, Message::Approve)) => {
                    return if msgs.len() == i + 2 {
                        Ok(())
                    } else {
                        bad("messages after Alice's approval")
                    };
                }
                Some((Party::Alice, Message::Reject)) => {}
                None => return Err(CouplingError::IncompleteTranscript),
                _ => return bad("expected Alice's verdict on the dart"),
            }
            i += 2;
        }
    }

    /// JSON-lines dump: one [`WireRecord`] per message plus a trailer.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for (sender, msg) in &self.messages {
            out.push_str(
                &serde_json::to_string(&WireRecord::from_message(*sender, msg))
                    .expect("wire records serialize"),
            );
            out.push('\n');
        }
        let trailer = TranscriptTrailer {
            kind: "trailer".into(),
            messages: self.messages.len(),
            dart_rounds: self.dart_rounds,
            total_bits: self.total_bits,
        };
        out.push_str(&serde_json::to_string(&trailer).expect("trailer serializes"));
        out.push('\n');
        out
    }

    /// Packs the messages into the logical bit format (MSB first, zero
    /// padded to a byte boundary). Returns the bytes and the bit length.
    pub fn encode_bits(&self, n: usize, d: u64) -> (Vec<u8>, u64) {
        let mut w = BitWriter::default();
        let index_bits = ceil_log2(n as u64);
        let num_bits = ceil_log2(d + 1);
        for (_, msg) in &self.messages {
            match *msg {
                Message::Propose {
                    index,
                    prob_numerator: num,
                }
                | Message::Dart {
                    index,
                    cum_numerator: num,
                } => {
                    w.push(index as u64, index_bits);
                    w.push(num, num_bits);
                }
                Message::Approve => w.push(1, 1),
                Message::Reject => w.push(0, 1),
            }
        }
        (w.bytes, w.len)
    }

    /// Inverse of [`Transcript::encode_bits`], driven by the exchange grammar.
    pub fn decode_bits(bytes: &[u8], bit_len: u64, n: usize, d: u64) -> Result<Self> {
        let mut r = BitReader {
            bytes,
            pos: 0,
            len: bit_len,
        };
        let index_bits = ceil_log2(n as u64);
        let num_bits = ceil_log2(d + 1);
        let mut messages = Vec::new();
        let index = r.take(index_bits)? as usize;
        let prob_numerator = r.take(num_bits)?;
        messages.push((
            Party::Alice,
            Message::Propose {
                index,
                prob_numerator,
            },
        ));
        if r.take(1)? == 1 {
            messages.push((Party::Bob, Message::Approve));
        } else {
            messages.push((Party::Bob, Message::Reject));
            loop {
                let index = r.take(index_bits)? as usize;
                let cum_numerator = r.take(num_bits)?;
                messages.push((
                    Party::Bob,
                    Message::Dart {
                        index,
                        cum_numerator,
                    },
                ));
                if r.take(1)? == 1 {
                    messages.push((Party::Alice, Message::Approve));
                    break;
                }
                messages.push((Party::Alice, Message::Reject));
            }
        }
        if r.pos != r.len {
            return Err(CouplingError::ProtocolViolation(
                "trailing bits after a complete exchange".into(),
            ));
        }
        Ok(Self::new(messages, n, d))
    }
}

#[derive(Default)]
struct BitWriter {
    bytes: Vec<u8>,
    len: u64,
}

impl BitWriter {
    fn push(&mut self, value: u64, width: u32) {
        for shift in (0..width).rev() {
            let bit = (value >> shift) & 1;
            if self.len.is_multiple_of(8) {
                self.bytes.push(0);
            }
            if bit == 1 {
                let last = self.bytes.last_mut().expect("byte pushed above");
                *last |= 0x80 >> (self.len % 8);
            }
            self.len += 1;
        }
    }
}

struct BitReader<'a> {
    bytes: &'a [u8],
    pos: u64,
    len: u64,
}

impl BitReader<'_> {
    fn take(&mut self, width: u32) -> Result<u64> {
        if self.pos + u64::from(width) > self.len {
            return Err(CouplingError::IncompleteTranscript);
        }
        let mut v = 0u64;
        for _ in 0..width {
            let byte = self.bytes[(self.pos / 8) as usize];
            let bit = (byte >> (7 - (self.pos % 8))) & 1;
            v = (v << 1) | u64::from(bit);
            self.pos += 1;
        }
        Ok(v)
    }
}
