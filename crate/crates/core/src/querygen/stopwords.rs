//! Built-in function-word lists used by the rule-based query synthesizer.
//!
//! Matching is on tokens as produced by [`crate::embedder::tokenize`], so
//! entries are lowercase and Chinese entries are single characters.

pub const ENGLISH: &[&str] = &[
    "a", "about", "after", "again", "all", "also", "am", "an", "and", "any", "are", "as", "at",
    "be", "been", "before", "being", "between", "both", "but", "by", "can", "could", "did", "do",
    "does", "doing", "down", "during", "each", "few", "for", "from", "further", "had", "has",
    "have", "having", "he", "her", "here", "him", "his", "how", "i", "if", "in", "into", "is",
    "it", "its", "just", "may", "me", "might", "more", "most", "must", "my", "no", "not", "of",
    "off", "on", "once", "only", "or", "other", "our", "out", "over", "own", "please", "same",
    "shall", "she", "should", "so", "some", "such", "than", "that", "the", "their", "them",
    "then", "there", "these", "they", "this", "those", "through", "to", "too", "under", "up",
    "very", "was", "we", "were", "what", "when", "where", "which", "who", "whom", "whose", "why",
    "will", "with", "without", "would", "you", "your",
];

pub const CHINESE: &[&str] = &[
    "的", "了", "是", "在", "和", "與", "与", "及", "或", "之", "其", "也", "而", "就", "都", "嗎",
    "吗", "呢", "吧", "啊", "呀", "有", "我", "你", "他", "她", "它", "們", "们", "這", "这", "那",
    "個", "个", "什", "麼", "么", "怎", "如", "何", "為", "为", "哪", "請", "请", "可", "以", "要",
    "會", "会", "能", "把", "被", "讓", "让", "給", "给", "對", "对", "從", "从", "到", "於", "于",
    "向", "著", "着", "過", "过", "地", "得", "所", "若", "則", "则", "但", "並", "并", "且", "等",
];

pub fn is_stopword(token: &str) -> bool {
    ENGLISH.binary_search(&token).is_ok() || CHINESE.contains(&token)
}
