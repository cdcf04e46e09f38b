use photonlab::io::{
    interleave, read_tags_binary, read_tags_csv, split_channels, write_tags_binary, write_tags_csv, HEADER_LEN, RECORD_LEN,
};
use photonlab::Error;
use photonlab_core::TimeTag;
use proptest::prelude::*;

fn tags_strategy() -> impl Strategy<Value = Vec<TimeTag>> {
    prop::collection::vec((0u8..4, 0u64..1 << 40), 0..300).prop_map(|mut v| {
        v.sort_by_key(|&(c, t)| (t, c));
        v.into_iter().map(|(c, t)| TimeTag::new(c, t)).collect()
    })
}

fn encode(tags: &[TimeTag]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_tags_binary(&mut buf, tags).unwrap();
    buf
}

fn offset_of(e: Error) -> u64 {
    match e {
        Error::TagFormat { offset, .. } => offset,
        other => panic!("expected a tag-format error, got {other}"),
    }
}

proptest! {
    #[test]
    fn binary_round_trip_is_byte_identical(tags in tags_strategy()) {
        let bytes = encode(&tags);
        prop_assert_eq!(bytes.len(), HEADER_LEN + RECORD_LEN * tags.len());
        let back = read_tags_binary(bytes.as_slice(), "mem").unwrap();
        prop_assert_eq!(&back, &tags);
        prop_assert_eq!(encode(&back), bytes);
    }

    #[test]
    fn csv_round_trip(tags in tags_strategy()) {
        let mut buf = Vec::new();
        write_tags_csv(&mut buf, &tags).unwrap();
        prop_assert_eq!(read_tags_csv(buf.as_slice(), "mem").unwrap(), tags);
    }

    #[test]
    fn split_then_interleave_restores_stream(tags in tags_strategy()) {
        let ch = split_channels(&tags);
        let refs: Vec<&[TimeTag]> = ch.iter().map(|c| c.as_slice()).collect();
        prop_assert_eq!(interleave(&refs), tags);
    }

    #[test]
    fn truncation_names_the_partial_record(tags in tags_strategy(), cut in 1usize..RECORD_LEN) {
        prop_assume!(!tags.is_empty());
        let bytes = encode(&tags);
        let short = &bytes[..bytes.len() - cut];
        let off = offset_of(read_tags_binary(short, "mem").unwrap_err());
        prop_assert_eq!(off as usize, HEADER_LEN + RECORD_LEN * (tags.len() - 1));
    }
}

#[test]
fn header_errors_carry_offsets() {
    let bytes = encode(&[TimeTag::new(0, 5)]);
    assert_eq!(offset_of(read_tags_binary(&bytes[..7], "mem").unwrap_err()), 7);

    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert_eq!(offset_of(read_tags_binary(bad.as_slice(), "mem").unwrap_err()), 0);

    let mut bad = bytes.clone();
    bad[4] = 9;
    assert_eq!(offset_of(read_tags_binary(bad.as_slice(), "mem").unwrap_err()), 4);

    let mut bad = bytes.clone();
    bad[10] = 1;
    assert_eq!(offset_of(read_tags_binary(bad.as_slice(), "mem").unwrap_err()), 10);
}

#[test]
fn record_errors_carry_offsets() {
    let tags = [TimeTag::new(0, 5), TimeTag::new(1, 9), TimeTag::new(0, 12)];
    let bytes = encode(&tags);
    let second = (HEADER_LEN + RECORD_LEN) as u64;

    let mut bad = bytes.clone();
    bad[second as usize + 2] = 7;
    assert_eq!(offset_of(read_tags_binary(bad.as_slice(), "mem").unwrap_err()), second + 2);

    let mut bad = bytes.clone();
    bad[second as usize + 13] = 7;
    assert_eq!(offset_of(read_tags_binary(bad.as_slice(), "mem").unwrap_err()), second + 13);

    let mut bad = bytes.clone();
    bad[second as usize + 4..second as usize + 12].copy_from_slice(&1u64.to_le_bytes());
    assert_eq!(offset_of(read_tags_binary(bad.as_slice(), "mem").unwrap_err()), second + 4);

    let mut bad = bytes;
    bad[second as usize + 4..second as usize + 12].copy_from_slice(&u64::MAX.to_le_bytes());
    assert_eq!(offset_of(read_tags_binary(bad.as_slice(), "mem").unwrap_err()), second + 4);
}

#[test]
fn empty_file_is_not_a_tag_file() {
    assert_eq!(offset_of(read_tags_binary(&[][..], "mem").unwrap_err()), 0);
    assert!(read_tags_binary(&encode(&[])[..], "mem").unwrap().is_empty());
}

#[test]
fn csv_errors_point_at_the_line() {
    let text = "channel,time_ps\n0,10\n1,x\n";
    assert_eq!(offset_of(read_tags_csv(text.as_bytes(), "mem").unwrap_err()), 21);
    let text = "0,10\n0,5\n";
    assert_eq!(offset_of(read_tags_csv(text.as_bytes(), "mem").unwrap_err()), 5);
    let tags = read_tags_csv("# comment\n\n3, 7\n".as_bytes(), "mem").unwrap();
    assert_eq!(tags, vec![TimeTag::new(3, 7)]);
}
