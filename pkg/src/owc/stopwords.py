"""Fixed English stopword list used by the n-gram concept splitter.

The list is frozen: changing it changes concept enumeration and therefore
every concept-similarity score, so edits require a version bump. The CLI
prints the active list via ``owc templates --stopwords``.
"""

STOPWORDS_VERSION = 1

STOPWORDS = frozenset(
    {
        # "can" stays out deliberately: it is a legitimate object noun.
        "a", "about", "above", "after", "again", "against", "all", "am",
        "an", "and", "any", "are", "as", "at", "be", "because", "been",
        "before", "being", "below", "between", "both", "but", "by",
        "could", "did", "do", "does", "doing", "down", "during",
        "each", "few", "for", "from", "further", "had", "has", "have",
        "having", "he", "her", "here", "hers", "herself", "him", "himself",
        "his", "how", "however", "i", "if", "in", "into", "is", "it",
        "its", "itself", "just", "me", "might", "more", "most", "must",
        "my", "myself", "no", "nor", "not", "now", "of", "off", "on",
        "once", "only", "onto", "or", "other", "ought", "our", "ours",
        "ourselves", "out", "over", "own", "same", "shall", "she",
        "should", "so", "some", "such", "than", "that", "the", "their",
        "theirs", "them", "themselves", "then", "there", "these", "they",
        "this", "those", "through", "to", "too", "under", "until", "up",
        "upon", "very", "via", "was", "we", "were", "what", "when",
        "where", "which", "while", "who", "whom", "why", "will", "with",
        "would", "you", "your", "yours", "yourself", "yourselves",
    }
)


def stopword_listing() -> list[str]:
    """Sorted view of the list, for printing and for golden tests."""
    return sorted(STOPWORDS)
