#include "attackcast/classify.hpp"

#include <regex>
#include <string>

namespace attackcast {

namespace {

using std::regex_constants::icase;
using std::regex_constants::ECMAScript;

struct Rule {
    EntityAttr attr;
    std::regex pattern;
};

const std::vector<Rule>& rules() {
    static const std::vector<Rule> table = [] {
        std::vector<Rule> r;
        r.push_back({EntityAttr::FR,
                     std::regex(R"(^(hklm|hkcu|hkcr|hku|hkcc|hkey_[a-z_]+|registry::)([\\/:].*)?$)", ECMAScript | icase)});
        r.push_back({EntityAttr::S,
                     std::regex(R"(^((https?|ftp|tcp|udp|smb|ldap)://\S+)$)"
                                R"(|^(\d{1,3}\.){3}\d{1,3}(:\d{1,5})?(/\S*)?$)"
                                R"(|^\[?[0-9a-f]{0,4}(:[0-9a-f]{0,4}){2,7}\]?(:\d{1,5})?$)"
                                R"(|^([a-z0-9-]+\.)+(com|net|org|info|biz|io|ru|cn|xyz|top|online|site|club|)"
                                R"(tk|pw|cc|co|uk|de|fr|jp|kr|in|br|su|gov|edu|mil|onion)(:\d{1,5})?(/\S*)?$)",
                                ECMAScript | icase)});
        r.push_back({EntityAttr::F0,
                     std::regex(R"((^|[\\/])(passwd|shadow|gshadow|sudoers|master\.passwd|group)$)"
                                R"(|(^|[\\/])\.ssh([\\/]|$)|(^|[\\/])id_(rsa|dsa|ecdsa|ed25519)(\.pub)?$)"
                                R"(|(^|[\\/])authorized_keys$|(^|[\\/])known_hosts$|(^|[\\/])\.bash_history$)"
                                R"(|(^|[\\/])(sam|security|system)(\.(hiv|save|bak))?$|(^|[\\/])ntds\.dit$)"
                                R"(|(^|[\\/])lsass(\.exe)?\.dmp$|(^|[\\/])(login data|cookies|key[34]\.db|logins\.json)$)"
                                R"(|(^|[\\/])\.aws[\\/]credentials$|(^|[\\/])\.netrc$|(^|[\\/])wallet\.dat$)",
                                ECMAScript | icase)});
        r.push_back({EntityAttr::F1, std::regex(R"(\.(dll|so(\.\d+)*|dylib|ocx|cpl|drv|sys|lib|a)$)", ECMAScript | icase)});
        r.push_back({EntityAttr::F2,
                     std::regex(R"(\.(exe|vbs|vbe|js|jse|wsf|wsh|hta|ps1|psm1|bat|cmd|sh|bash|py|pl|rb|jar|scr|)"
                                R"(msi|lnk|elf|bin|run|app|com)$)",
                                ECMAScript | icase)});
        r.push_back({EntityAttr::P,
                     std::regex(R"(^(pid[:=#]?\s*\d+|[a-z_][a-z0-9_\- ]*|\d+)$)", ECMAScript | icase)});
        return r;
    }();
    return table;
}

}  // namespace

EntityAttr classify_entity(std::string_view name) {
    if (name.empty()) throw InvalidInput("classify_entity: empty entity name");
    const std::string s(name);
    for (const Rule& rule : rules()) {
        if (std::regex_search(s, rule.pattern)) return rule.attr;
    }
    return EntityAttr::F3;
}

EntityAttr subdivide_entity(std::string_view name, CoarseClass coarse) {
    switch (coarse) {
        case CoarseClass::Process:
            return EntityAttr::P;
        case CoarseClass::Socket:
            return EntityAttr::S;
        case CoarseClass::File:
            break;
    }
    const EntityAttr a = classify_entity(name);
    return is_file(a) ? a : EntityAttr::F3;
}

}  // namespace attackcast
