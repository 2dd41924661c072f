//! Answer repair, textual/binary encoding and preprocessing statistics.

mod dl;
mod encode;
mod mitigation;
mod stats;

pub use dl::{correct_option, dl_distance, match_option, OptionMatch};
pub use encode::{
    compute_slot_size, encode_working_set, format_number, read_binary, read_textual,
    thermometer_count, to_binary, to_textual, write_binary, write_consolidation, write_info,
    write_questions_list, write_textual, Encoded, EncodedSample, EncodingConfig, EncodingPlan,
    FieldSpec, FieldText, NumericStats,
};
pub use mitigation::{coerce_numeric, parse_locale_number, range_check, NumericFlag};
pub use stats::{
    collect_statistics, text_counts, words, write_statistics, Dictionary, SampleStatistics,
    STATISTICS_HEADER,
};
