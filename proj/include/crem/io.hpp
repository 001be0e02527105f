#ifndef CREM_IO_HPP
#define CREM_IO_HPP

// Text formats: covariance specs as JSON or short strings, instance dumps and
// leaf distributions as CSV.

#include "crem/covariance.hpp"
#include "crem/disorder.hpp"
#include "crem/oracle.hpp"

#include "json.hpp"

#include <charconv>
#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace crem
{

inline nlohmann::json to_json(const CovarianceSpec& spec)
{
    nlohmann::json points = nlohmann::json::array();
    for (const auto& p : spec.breakpoints()) points.push_back({p.x, p.value});
    return {{"breakpoints", points}};
}

inline CovarianceSpec covariance_from_json(const nlohmann::json& doc)
{
    if (!doc.is_object() || !doc.contains("breakpoints") || !doc["breakpoints"].is_array())
        throw std::invalid_argument("covariance JSON needs a \"breakpoints\" array");
    std::vector<Breakpoint> points;
    for (const auto& item : doc["breakpoints"]) {
        if (!item.is_array() || item.size() != 2) throw std::invalid_argument("breakpoint must be [x, A]");
        points.push_back({item[0].get<double>(), item[1].get<double>()});
    }
    return CovarianceSpec::piecewise_linear(std::move(points));
}

namespace detail
{
inline std::vector<std::string_view> split(std::string_view text, char sep)
{
    std::vector<std::string_view> parts;
    std::size_t start = 0;
    while (true) {
        const auto pos = text.find(sep, start);
        parts.push_back(text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return parts;
}

template <typename T>
T parse_number(std::string_view text, std::string_view what)
{
    T value{};
    const auto* end = text.data() + text.size();
    const auto res = std::from_chars(text.data(), end, value);
    if (res.ec != std::errc{} || res.ptr != end)
        throw std::invalid_argument("bad " + std::string(what) + ": '" + std::string(text) + "'");
    return value;
}
} // namespace detail

/// "grem:a0,s1:e1,s2:e2,..." with block lengths s_i summing to `depth`.
inline CovarianceSpec parse_grem(std::string_view text, int depth)
{
    if (!text.starts_with("grem:")) throw std::invalid_argument("GREM spec must start with 'grem:'");
    const auto parts = detail::split(text.substr(5), ',');
    if (parts.size() < 2) throw std::invalid_argument("GREM spec needs a0 and at least one block");
    const double a0 = detail::parse_number<double>(parts[0], "GREM a0");
    std::vector<int> lengths;
    std::vector<double> energies;
    for (std::size_t i = 1; i < parts.size(); ++i) {
        const auto block = detail::split(parts[i], ':');
        if (block.size() != 2) throw std::invalid_argument("GREM block must be length:energy");
        lengths.push_back(detail::parse_number<int>(block[0], "GREM block length"));
        energies.push_back(detail::parse_number<double>(block[1], "GREM block energy"));
    }
    return grem_covariance(a0, lengths, energies, depth);
}

/// Accepts "brw", "grem:...", an inline JSON document, or a path to a JSON file.
inline CovarianceSpec parse_covariance(const std::string& text, int depth)
{
    if (text == "brw") return CovarianceSpec::brw();
    if (text.starts_with("grem:")) return parse_grem(text, depth);
    if (text.starts_with("{")) return covariance_from_json(nlohmann::json::parse(text));
    std::ifstream in(text);
    if (!in) throw std::invalid_argument("cannot open covariance file '" + text + "'");
    return covariance_from_json(nlohmann::json::parse(in));
}

/// CSV rows (path-bits, depth, Y, X) for every vertex up to depth n, breadth first.
inline void write_disorder_csv(std::ostream& out, const CremInstance& instance, int n)
{
    if (n > instance.enumeration_cap() || n > instance.depth())
        throw std::out_of_range("dump: depth above the tree or the enumeration cap");
    out << "path_bits,depth,Y,X\n";
    std::ostringstream row;
    row.precision(17);
    for (int d = 0; d <= n; ++d) {
        const auto energies = instance.level_energies(d);
        for (std::size_t i = 0; i < energies.size(); ++i) {
            const auto v = VertexId::from_bits(i, d);
            row.str({});
            row << v.to_string() << ',' << d << ',' << instance.Y(v) << ',' << energies[i] << '\n';
            out << row.str();
        }
    }
}

/// CSV rows (bits, prob).
inline void write_distribution_csv(std::ostream& out, const LeafDistribution& dist)
{
    out << "bits,prob\n";
    std::ostringstream row;
    row.precision(17);
    for (std::size_t i = 0; i < dist.probs.size(); ++i) {
        row.str({});
        row << VertexId::from_bits(i, dist.depth).to_string() << ',' << dist.probs[i] << '\n';
        out << row.str();
    }
}

inline LeafDistribution read_distribution_csv(std::istream& in)
{
    std::string line;
    if (!std::getline(in, line) || line != "bits,prob") throw std::invalid_argument("distribution CSV: bad header");
    LeafDistribution dist;
    int depth = -1;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw std::invalid_argument("distribution CSV: bad row");
        const auto v = VertexId::parse(std::string_view(line).substr(0, comma));
        if (depth < 0) {
            depth = v.depth();
            dist.depth = depth;
            dist.probs.assign(std::size_t{1} << depth, 0.0);
        } else if (v.depth() != depth) {
            throw std::invalid_argument("distribution CSV: mixed depths");
        }
        dist.probs[v.bits()] = std::stod(line.substr(comma + 1));
    }
    if (depth < 0) throw std::invalid_argument("distribution CSV: no rows");
    return dist;
}

} // namespace crem

#endif // CREM_IO_HPP
