#include "trajopt/json_reader.hpp"

namespace trajopt {

using nlohmann::json;

namespace {

// RFC 6901 escaping
std::string escape(const std::string& key) {
    std::string out;
    for (char c : key) {
        if (c == '~')
            out += "~0";
        else if (c == '/')
            out += "~1";
        else
            out += c;
    }
    return out;
}

double as_number(const json& j, const std::string& ptr) {
    if (!j.is_number()) throw ConfigError(ptr, "expected a number");
    return j.get<double>();
}

} // namespace

ObjectReader::ObjectReader(const json& j, std::string pointer) : j_(j), pointer_(std::move(pointer)) {
    if (!j_.is_object()) throw ConfigError(pointer_.empty() ? "/" : pointer_, "expected an object");
}

bool ObjectReader::has(const std::string& key) const { return j_.contains(key); }

std::string ObjectReader::path(const std::string& key) const { return pointer_ + "/" + escape(key); }

const json& ObjectReader::at(const std::string& key) {
    if (!has(key)) throw ConfigError(path(key), "missing required key");
    used_.insert(key);
    return j_.at(key);
}

double ObjectReader::number(const std::string& key, double fallback) {
    if (!has(key)) return fallback;
    return as_number(at(key), path(key));
}

int ObjectReader::integer(const std::string& key, int fallback) {
    if (!has(key)) return fallback;
    const json& v = at(key);
    if (!v.is_number_integer()) throw ConfigError(path(key), "expected an integer");
    return v.get<int>();
}

bool ObjectReader::boolean(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const json& v = at(key);
    if (!v.is_boolean()) throw ConfigError(path(key), "expected true or false");
    return v.get<bool>();
}

std::string ObjectReader::string(const std::string& key, const std::string& fallback) {
    if (!has(key)) return fallback;
    const json& v = at(key);
    if (!v.is_string()) throw ConfigError(path(key), "expected a string");
    return v.get<std::string>();
}

Eigen::Vector3d ObjectReader::vec3(const std::string& key, const Eigen::Vector3d& fallback) {
    if (!has(key)) return fallback;
    Eigen::VectorXd v = json_vector(at(key), path(key));
    if (v.size() != 3) throw ConfigError(path(key), "expected 3 numbers");
    return v;
}

Eigen::VectorXd ObjectReader::vector(const std::string& key, const Eigen::VectorXd& fallback) {
    if (!has(key)) return fallback;
    return json_vector(at(key), path(key));
}

Eigen::Matrix3d ObjectReader::mat3(const std::string& key, const Eigen::Matrix3d& fallback) {
    if (!has(key)) return fallback;
    const json& v = at(key);
    const std::string p = path(key);
    if (!v.is_array() || v.size() != 3) throw ConfigError(p, "expected a 3x3 array of rows");
    Eigen::Matrix3d m;
    for (int i = 0; i < 3; ++i) {
        Eigen::VectorXd row = json_vector(v[i], p + "/" + std::to_string(i));
        if (row.size() != 3) throw ConfigError(p + "/" + std::to_string(i), "expected 3 numbers");
        m.row(i) = row.transpose();
    }
    return m;
}

void ObjectReader::finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
        if (!used_.count(it.key())) throw ConfigError(pointer_ + "/" + escape(it.key()), "unknown key");
}

Eigen::VectorXd json_vector(const json& j, const std::string& pointer) {
    if (!j.is_array()) throw ConfigError(pointer, "expected an array of numbers");
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i)
        v[static_cast<Eigen::Index>(i)] = as_number(j[i], pointer + "/" + std::to_string(i));
    return v;
}

json to_json(const Eigen::VectorXd& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

json to_json(const Eigen::Matrix3d& m) {
    json out = json::array();
    for (int i = 0; i < 3; ++i) out.push_back({m(i, 0), m(i, 1), m(i, 2)});
    return out;
}

} // namespace trajopt
