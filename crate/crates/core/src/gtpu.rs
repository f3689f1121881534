//! GTP-U v1 user-plane packets: data model, encoder, and parser.
//!
//! Only the G-PDU message is modeled. When a QFI is present the packet carries
//! a single PDU Session Container extension header:
//!
//! ```text
//!  octet 0      flags: version(3)=1 | PT(1)=1 | spare(1) | E(1) | S(1) | PN(1)
//!  octet 1      message type (0xFF, G-PDU)
//!  octets 2-3   length of everything after octet 7 (big endian)
//!  octets 4-7   TEID (big endian)
//!  -- present when any of E/S/PN is set --
//!  octets 8-9   sequence number
//!  octet 10     N-PDU number
//!  octet 11     next extension header type (0x85 = PDU Session Container)
//!  -- PDU Session Container --
//!  octet 12     extension length in 4-octet units (1)
//!  octet 13     PDU type (upper nibble)
//!  octet 14     QFI (lower 6 bits)
//!  octet 15     next extension header type (0 = none)
//! ```
//!
//! The outer N3 UDP/IP transport is carried as metadata and is not serialized.

use std::fmt;
use std::net::Ipv4Addr;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const GTPU_PORT: u16 = 2152;
pub const GPDU_MESSAGE_TYPE: u8 = 0xFF;
pub const PDU_SESSION_CONTAINER: u8 = 0x85;

const MANDATORY_HEADER_LEN: usize = 8;
const OPTIONAL_FIELDS_LEN: usize = 4;
const PDU_SESSION_CONTAINER_LEN: usize = 4;
const MIN_INNER_LEN: usize = 20;

const FLAG_VERSION_1: u8 = 0x20;
const FLAG_PT: u8 = 0x10;
const FLAG_E: u8 = 0x04;
const FLAG_S: u8 = 0x02;
const FLAG_PN: u8 = 0x01;

/// PDU type written into the container; N3 ingress at the UPF is uplink.
const PDU_TYPE_UL: u8 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GtpuError {
    #[error("truncated {field}: need {needed} bytes, have {available}")]
    Truncated {
        field: &'static str,
        needed: usize,
        available: usize,
    },
    #[error("unsupported GTP version {0} in flags octet")]
    UnsupportedVersion(u8),
    #[error("protocol type bit is 0 (GTP'), expected GTP")]
    NotGtp,
    #[error("message type 0x{0:02x} is not a G-PDU")]
    NotGpdu(u8),
    #[error("length field says {declared} bytes follow the mandatory header, found {actual}")]
    LengthMismatch { declared: usize, actual: usize },
    #[error("unknown extension header type 0x{0:02x}")]
    UnknownExtension(u8),
    #[error("extension header 0x{ext_type:02x} has invalid length {units} (4-octet units)")]
    BadExtensionLength { ext_type: u8, units: u8 },
    #[error("PDU session container has unknown PDU type {0}")]
    UnknownPduType(u8),
    #[error("PDU session container repeated")]
    DuplicateContainer,
    #[error("malformed inner datagram: {0}")]
    MalformedInner(String),
    #[error("QFI {0} exceeds the 6-bit range (0..=63)")]
    QfiOutOfRange(u16),
    #[error("invalid IPv4 address {0:?}")]
    BadAddress(String),
}

/// IPv4 address of a UE (or any other IPv4 endpoint in the model).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct UeAddress(pub [u8; 4]);

impl UeAddress {
    pub const fn new(a: u8, b: u8, c: u8, d: u8) -> Self {
        Self([a, b, c, d])
    }

    pub fn octets(self) -> [u8; 4] {
        self.0
    }
}

impl fmt::Display for UeAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        Ipv4Addr::from(self.0).fmt(f)
    }
}

impl FromStr for UeAddress {
    type Err = GtpuError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ipv4Addr::from_str(s.trim())
            .map(|a| Self(a.octets()))
            .map_err(|_| GtpuError::BadAddress(s.to_string()))
    }
}

impl From<Ipv4Addr> for UeAddress {
    fn from(a: Ipv4Addr) -> Self {
        Self(a.octets())
    }
}

impl Serialize for UeAddress {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for UeAddress {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Tunnel endpoint identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Teid(pub u32);

impl fmt::Display for Teid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// QoS flow identifier, 6 bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct Qfi(u8);

impl Qfi {
    pub const MAX: u8 = 63;

    pub fn new(value: u8) -> Result<Self, GtpuError> {
        if value > Self::MAX {
            return Err(GtpuError::QfiOutOfRange(value.into()));
        }
        Ok(Self(value))
    }

    pub fn value(self) -> u8 {
        self.0
    }
}

impl TryFrom<u8> for Qfi {
    type Error = GtpuError;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl<'de> Deserialize<'de> for Qfi {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = u16::deserialize(d)?;
        let v = u8::try_from(v).map_err(|_| serde::de::Error::custom(GtpuError::QfiOutOfRange(v)))?;
        Qfi::new(v).map_err(serde::de::Error::custom)
    }
}

impl fmt::Display for Qfi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Outer N3 transport endpoints. Metadata only; never serialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct N3Transport {
    pub src: UeAddress,
    pub dst: UeAddress,
    pub src_port: u16,
    pub dst_port: u16,
}

impl Default for N3Transport {
    fn default() -> Self {
        Self {
            src: UeAddress::new(192, 168, 1, 10),
            dst: UeAddress::new(192, 168, 1, 20),
            src_port: GTPU_PORT,
            dst_port: GTPU_PORT,
        }
    }
}

/// Which inner address identifies the UE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// UE -> data network: the UE is the inner source.
    #[default]
    Uplink,
    /// data network -> UE: the UE is the inner destination.
    Downlink,
}

/// A G-PDU with an IPv4 inner datagram.
///
/// The inner datagram is reference counted so that schedules can share one
/// buffer between packets of identical shape.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GtpuPacket {
    teid: Teid,
    qfi: Option<Qfi>,
    inner: Arc<[u8]>,
    transport: N3Transport,
}

impl GtpuPacket {
    pub fn new(teid: Teid, qfi: Option<Qfi>, inner: impl Into<Arc<[u8]>>) -> Result<Self, GtpuError> {
        let inner = inner.into();
        if inner.len() < MIN_INNER_LEN {
            return Err(GtpuError::MalformedInner(format!(
                "{} bytes, an IPv4 header needs at least {MIN_INNER_LEN}",
                inner.len()
            )));
        }
        Ok(Self {
            teid,
            qfi,
            inner,
            transport: N3Transport::default(),
        })
    }

    pub fn with_transport(mut self, transport: N3Transport) -> Self {
        self.transport = transport;
        self
    }

    pub fn teid(&self) -> Teid {
        self.teid
    }

    pub fn qfi(&self) -> Option<Qfi> {
        self.qfi
    }

    pub fn inner(&self) -> &[u8] {
        &self.inner
    }

    pub fn transport(&self) -> N3Transport {
        self.transport
    }

    /// Size of the encoded GTP-U message.
    pub fn encoded_len(&self) -> usize {
        MANDATORY_HEADER_LEN + self.extension_len() + self.inner.len()
    }

    fn extension_len(&self) -> usize {
        if self.qfi.is_some() {
            OPTIONAL_FIELDS_LEN + PDU_SESSION_CONTAINER_LEN
        } else {
            0
        }
    }
}

/// Serializes the GTP-U layer of `p`.
pub fn encode(p: &GtpuPacket) -> Result<Vec<u8>, GtpuError> {
    if p.inner.len() < MIN_INNER_LEN {
        return Err(GtpuError::MalformedInner(format!("{} bytes", p.inner.len())));
    }
    let payload_len = p.extension_len() + p.inner.len();
    let length = u16::try_from(payload_len).map_err(|_| {
        GtpuError::MalformedInner(format!("{} bytes do not fit the 16-bit length field", payload_len))
    })?;

    let mut out = Vec::with_capacity(p.encoded_len());
    let mut flags = FLAG_VERSION_1 | FLAG_PT;
    if p.qfi.is_some() {
        flags |= FLAG_E;
    }
    out.push(flags);
    out.push(GPDU_MESSAGE_TYPE);
    out.extend_from_slice(&length.to_be_bytes());
    out.extend_from_slice(&p.teid.0.to_be_bytes());
    if let Some(qfi) = p.qfi {
        out.extend_from_slice(&[0, 0, 0, PDU_SESSION_CONTAINER]);
        out.extend_from_slice(&[1, PDU_TYPE_UL << 4, qfi.value(), 0]);
    }
    out.extend_from_slice(&p.inner);
    Ok(out)
}

/// Parses a G-PDU, attaching the default N3 transport metadata.
pub fn decode(bytes: &[u8]) -> Result<GtpuPacket, GtpuError> {
    decode_with_transport(bytes, N3Transport::default())
}

/// Parses a G-PDU that arrived over `transport`.
pub fn decode_with_transport(bytes: &[u8], transport: N3Transport) -> Result<GtpuPacket, GtpuError> {
    if bytes.len() < MANDATORY_HEADER_LEN {
        return Err(GtpuError::Truncated {
            field: "mandatory header",
            needed: MANDATORY_HEADER_LEN,
            available: bytes.len(),
        });
    }
    let flags = bytes[0];
    let version = flags >> 5;
    if version != 1 {
        return Err(GtpuError::UnsupportedVersion(version));
    }
    if flags & FLAG_PT == 0 {
        return Err(GtpuError::NotGtp);
    }
    if bytes[1] != GPDU_MESSAGE_TYPE {
        return Err(GtpuError::NotGpdu(bytes[1]));
    }
    let declared = u16::from_be_bytes([bytes[2], bytes[3]]) as usize;
    let actual = bytes.len() - MANDATORY_HEADER_LEN;
    if declared != actual {
        return Err(GtpuError::LengthMismatch { declared, actual });
    }
    let teid = Teid(u32::from_be_bytes([bytes[4], bytes[5], bytes[6], bytes[7]]));

    let mut pos = MANDATORY_HEADER_LEN;
    let mut next_ext = 0u8;
    if flags & (FLAG_E | FLAG_S | FLAG_PN) != 0 {
        if bytes.len() < pos + OPTIONAL_FIELDS_LEN {
            return Err(GtpuError::Truncated {
                field: "optional fields",
                needed: pos + OPTIONAL_FIELDS_LEN,
                available: bytes.len(),
            });
        }
        if flags & FLAG_E != 0 {
            next_ext = bytes[pos + 3];
        }
        pos += OPTIONAL_FIELDS_LEN;
    }

    let mut qfi = None;
    while next_ext != 0 {
        if next_ext != PDU_SESSION_CONTAINER {
            return Err(GtpuError::UnknownExtension(next_ext));
        }
        if bytes.len() < pos + 1 {
            return Err(GtpuError::Truncated {
                field: "extension length",
                needed: pos + 1,
                available: bytes.len(),
            });
        }
        let units = bytes[pos];
        let ext_len = units as usize * 4;
        if units == 0 {
            return Err(GtpuError::BadExtensionLength { ext_type: next_ext, units });
        }
        if bytes.len() < pos + ext_len {
            return Err(GtpuError::Truncated {
                field: "PDU session container",
                needed: pos + ext_len,
                available: bytes.len(),
            });
        }
        let pdu_type = bytes[pos + 1] >> 4;
        if pdu_type > 1 {
            return Err(GtpuError::UnknownPduType(pdu_type));
        }
        if qfi.is_some() {
            return Err(GtpuError::DuplicateContainer);
        }
        qfi = Some(Qfi(bytes[pos + 2] & 0x3F));
        next_ext = bytes[pos + ext_len - 1];
        pos += ext_len;
    }

    GtpuPacket::new(teid, qfi, &bytes[pos..]).map(|p| p.with_transport(transport))
}

const IPV4_SRC_OFFSET: usize = 12;
const IPV4_DST_OFFSET: usize = 16;

/// Reads the UE side of the inner IPv4 header.
pub fn inner_ue_address(p: &GtpuPacket, direction: Direction) -> Result<UeAddress, GtpuError> {
    let inner = p.inner();
    if inner.len() < MIN_INNER_LEN {
        return Err(GtpuError::MalformedInner(format!("{} bytes", inner.len())));
    }
    if inner[0] >> 4 != 4 {
        return Err(GtpuError::MalformedInner(format!("IP version {}", inner[0] >> 4)));
    }
    let off = match direction {
        Direction::Uplink => IPV4_SRC_OFFSET,
        Direction::Downlink => IPV4_DST_OFFSET,
    };
    Ok(UeAddress([inner[off], inner[off + 1], inner[off + 2], inner[off + 3]]))
}

pub const IPPROTO_ICMP: u8 = 1;
pub const IPPROTO_UDP: u8 = 17;

/// Builds an IPv4 datagram of `total_len` bytes with a valid header checksum.
///
/// ICMP datagrams get an echo-request header; UDP datagrams get a UDP header
/// with ports 5000 -> 5000. The remaining payload is zero.
pub fn ipv4_datagram(src: UeAddress, dst: UeAddress, protocol: u8, total_len: u16) -> Vec<u8> {
    let total = usize::from(total_len.max(MIN_INNER_LEN as u16));
    let mut d = vec![0u8; total];
    d[0] = 0x45;
    d[2..4].copy_from_slice(&(total as u16).to_be_bytes());
    d[6] = 0x40; // DF
    d[8] = 64;
    d[9] = protocol;
    d[12..16].copy_from_slice(&src.0);
    d[16..20].copy_from_slice(&dst.0);
    let csum = internet_checksum(&d[..20]);
    d[10..12].copy_from_slice(&csum.to_be_bytes());

    let l4 = &mut d[20..];
    match protocol {
        IPPROTO_ICMP if l4.len() >= 8 => {
            l4[0] = 8;
            let c = internet_checksum(l4);
            l4[2..4].copy_from_slice(&c.to_be_bytes());
        }
        IPPROTO_UDP if l4.len() >= 8 => {
            l4[0..2].copy_from_slice(&5000u16.to_be_bytes());
            l4[2..4].copy_from_slice(&5000u16.to_be_bytes());
            let udp_len = l4.len() as u16;
            l4[4..6].copy_from_slice(&udp_len.to_be_bytes());
        }
        _ => {}
    }
    d
}

fn internet_checksum(data: &[u8]) -> u16 {
    let mut sum = 0u32;
    for chunk in data.chunks(2) {
        let word = if chunk.len() == 2 {
            u16::from_be_bytes([chunk[0], chunk[1]])
        } else {
            u16::from_be_bytes([chunk[0], 0])
        };
        sum += u32::from(word);
    }
    while sum >> 16 != 0 {
        sum = (sum & 0xFFFF) + (sum >> 16);
    }
    !(sum as u16)
}
