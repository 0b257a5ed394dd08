use std::io::Cursor;
use std::time::Duration;

use onesim::distributed::{
    batch_events, decode_frame, encode_frame, read_frame, write_frame, Batcher, FrameDecoder, MsgType, WireError,
    WireFrame, HEADER_LEN, MAGIC,
};
use proptest::prelude::*;

fn msg_type() -> impl Strategy<Value = MsgType> {
    (0u8..=255).prop_filter_map("known type", MsgType::from_byte)
}

fn frame() -> impl Strategy<Value = WireFrame> {
    (msg_type(), "\\PC{0,200}").prop_map(|(t, p)| WireFrame::new(t, p))
}

proptest! {
    #[test]
    fn encode_decode_round_trip(f in frame()) {
        let bytes = encode_frame(&f);
        prop_assert_eq!(&bytes[..4], &MAGIC[..]);
        let (back, used) = decode_frame(&bytes).unwrap();
        prop_assert_eq!(used, bytes.len());
        prop_assert_eq!(back, f);
    }

    #[test]
    fn decoder_handles_any_chunking(frames in prop::collection::vec(frame(), 1..8), chunk in 1usize..40) {
        let stream: Vec<u8> = frames.iter().flat_map(encode_frame).collect();
        let mut dec = FrameDecoder::new();
        let mut out = Vec::new();
        for piece in stream.chunks(chunk) {
            dec.push(piece);
            while let Some(f) = dec.next_frame().unwrap() {
                out.push(f);
            }
        }
        prop_assert_eq!(dec.buffered(), 0);
        prop_assert_eq!(out, frames);
    }

    #[test]
    fn strict_prefixes_are_truncated(f in frame(), cut in 0usize..1000) {
        let bytes = encode_frame(&f);
        let cut = cut % bytes.len();
        let truncated = matches!(decode_frame(&bytes[..cut]), Err(WireError::Truncated { .. }));
        prop_assert!(truncated);
    }

    #[test]
    fn arbitrary_bytes_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..64)) {
        let _ = decode_frame(&bytes);
        let mut dec = FrameDecoder::new();
        dec.push(&bytes);
        let _ = dec.next_frame();
    }

    #[test]
    fn batches_preserve_order_and_bounds(gaps in prop::collection::vec(0u64..30, 0..600), size in 1usize..300) {
        let mut t = 0;
        let queue: Vec<(u64, usize)> = gaps.iter().enumerate().map(|(i, g)| { t += g; (t, i) }).collect();
        let batches = batch_events(queue.clone(), size, 20);
        prop_assert!(batches.iter().all(|b| !b.is_empty() && b.len() <= size));
        let flat: Vec<usize> = batches.into_iter().flatten().collect();
        prop_assert_eq!(flat, (0..queue.len()).collect::<Vec<_>>());
    }
}

#[test]
fn stream_read_write() {
    let frames = vec![WireFrame::new(MsgType::RegisterWorker, "{\"name\":\"w\"}"), WireFrame::empty(MsgType::Ack)];
    let mut buf = Vec::new();
    for f in &frames {
        write_frame(&mut buf, f).unwrap();
    }
    let mut cur = Cursor::new(buf);
    assert_eq!(read_frame(&mut cur).unwrap(), frames[0]);
    assert_eq!(read_frame(&mut cur).unwrap(), frames[1]);
    assert!(read_frame(&mut cur).is_err());
}

#[test]
fn bad_magic_and_version_are_rejected() {
    let mut bytes = encode_frame(&WireFrame::empty(MsgType::Ack));
    assert_eq!(bytes.len(), HEADER_LEN);
    bytes[4] = 99;
    assert!(matches!(decode_frame(&bytes), Err(WireError::UnsupportedVersion(99))));
    bytes[0] = b'X';
    assert!(matches!(decode_frame(&bytes), Err(WireError::BadMagic(_))));
}

#[test]
fn batcher_flushes_on_age() {
    let start = std::time::Instant::now();
    let mut b = Batcher::new(256, Duration::from_millis(20));
    assert!(b.push(1, start).is_empty());
    assert!(b.poll(start + Duration::from_millis(5)).is_none());
    assert_eq!(b.poll(start + Duration::from_millis(20)), Some(vec![1]));
    assert!(b.is_empty());
}
