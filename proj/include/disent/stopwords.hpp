#pragma once

#include <string>
#include <unordered_set>

namespace disent {

// Fixed, versioned list of common English function words used by the
// pseudo-pair overlap filter.
const std::unordered_set<std::string>& stopwords();

bool is_stopword(const std::string& token);

}  // namespace disent
