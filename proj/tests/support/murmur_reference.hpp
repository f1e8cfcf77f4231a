#pragma once

#include <cstdint>
#include <string_view>

// Reference hashes from scikit-learn: murmurhash3_32(token, seed=0, positive=True).
struct MurmurReference {
  std::string_view token;
  std::uint32_t hash;
};

inline constexpr MurmurReference kMurmurReference[] = {
    {"", 0u},
    {"a", 1009084850u},
    {"ab", 2613040991u},
    {"abc", 3017643002u},
    {"abcd", 1139631978u},
    {"abcde", 3902511862u},
    {"NtCreateFile|path=system32", 1624985657u},
    {"CreateFile|path=system32", 2481561681u},
    {"FindFirstFile", 1751924503u},
    {"RegOpenKey|key=reg:hklm", 987945023u},
    {"héllo", 3164577896u},
    {"日本語", 2779017879u},
    {"NtWriteFile|buffer=int_bin:12", 1102933497u},
    {"InternetOpenUrl|size=int_bin:9", 1777754645u},
    {"NtCreateFile|handle=int_bin:24", 512117113u},
    {"LdrLoadDll|url=int_bin:27", 3551583108u},
    {"NtCreateFile|flags=temp", 4033274218u},
    {"LdrLoadDll|buffer=int_bin:12", 2694257364u},
    {"LdrLoadDll|flags=windows", 2103866189u},
    {"send|path=int_bin:27", 2924426219u},
    {"LdrLoadDll|flags=int_bin:27", 2708491886u},
    {"NtCreateFile|buffer=temp", 613477324u},
    {"CreateProcessInternal|path=int_bin:24", 1919572332u},
    {"RegSetValue|key=int_bin:12", 3318323624u},
    {"RegSetValue|handle=int_bin:27", 2025230616u},
    {"NtAllocateVirtualMemory|size=programfiles", 3407959962u},
    {"CreateProcessInternal|url=programfiles", 2339255145u},
    {"LdrLoadDll|path=int_bin:30", 2410256803u},
    {"CreateProcessInternal|command_line=int_bin:24", 1107111369u},
    {"send|url=int_bin:15", 84257387u},
    {"connect|url=int_bin:0", 1975687091u},
    {"CreateProcessInternal|size=reg:hklm", 2475554663u},
    {"LdrLoadDll|key=int_bin:21", 4231020867u},
    {"connect|url=int_bin:15", 1196070787u},
    {"NtAllocateVirtualMemory|handle=programfiles", 3352312914u},
    {"send|size=int_bin:3", 2266983042u},
    {"RegSetValue|command_line=int_bin:12", 3715408964u},
    {"InternetOpenUrl|url=int_bin:6", 1168198620u},
    {"connect|command_line=windows", 3203976165u},
    {"LdrLoadDll|key=int_bin:18", 1101605063u},
    {"LdrLoadDll|path=int_bin:0", 2226814275u},
    {"connect|key=int_bin:9", 2744089686u},
    {"InternetOpenUrl|path=int_bin:15", 339169221u},
    {"InternetOpenUrl|size=int_bin:30", 3681240940u},
    {"LdrLoadDll|command_line=temp", 250087414u},
    {"CreateProcessInternal|key=url", 3478975302u},
    {"CreateProcessInternal|buffer=int_bin:9", 3443768176u},
    {"connect|handle=generic_path", 3216814076u},
    {"connect|buffer=int_bin:24", 1566781751u},
    {"NtAllocateVirtualMemory|size=int_bin:12", 4025111954u},
    {"NtAllocateVirtualMemory|buffer=int_bin:6", 4046060881u},
    {"send|flags=url", 620846799u},
    {"LdrLoadDll|size=url", 2070364971u},
    {"CreateProcessInternal|flags=system32", 2751783012u},
    {"connect|size=reg:hkcu", 983700898u},
    {"NtAllocateVirtualMemory|path=url", 272467848u},
    {"send|url=int_bin:30", 425058806u},
    {"InternetOpenUrl|size=int_bin:21", 3838931053u},
    {"NtCreateFile|command_line=int_bin:24", 1476424823u},
    {"send|buffer=int_bin:9", 1730162844u},
    {"send|handle=int_bin:18", 1067432033u},
    {"send|path=cmd", 3534797519u},
    {"LdrLoadDll|flags=int_bin:15", 3446038058u},
    {"RegSetValue|handle=int_bin:3", 3441248272u},
    {"NtCreateFile|handle=system32", 1578354264u},
    {"RegSetValue|handle=int_bin:6", 1965778298u},
    {"NtCreateFile|handle=cmd", 2971455617u},
    {"send|size=reg:hkcu", 3167733370u},
    {"InternetOpenUrl|url=int_bin:18", 1706985751u},
    {"LdrLoadDll|handle=int_bin:18", 3319439461u},
    {"connect|command_line=int_bin:18", 1275198222u},
    {"NtAllocateVirtualMemory|handle=url", 2590611810u},
    {"LdrLoadDll|url=reg:hkcu", 1323840677u},
    {"connect|size=int_bin:21", 3298388075u},
    {"NtCreateFile|flags=int_bin:21", 2923388009u},
    {"InternetOpenUrl|size=int_bin:24", 1480795630u},
    {"NtCreateFile|key=windows", 1260571387u},
    {"NtAllocateVirtualMemory|url=generic_path", 1395720842u},
    {"InternetOpenUrl|flags=int_bin:24", 3115101803u},
    {"InternetOpenUrl|flags=int_bin:30", 269309328u},
    {"CreateProcessInternal|flags=int_bin:9", 3908037499u},
    {"CreateProcessInternal|flags=int_bin:21", 1153221664u},
    {"connect|url=system32", 2231838775u},
    {"NtCreateFile|key=int_bin:18", 1606971738u},
    {"NtAllocateVirtualMemory|flags=int_bin:30", 3172962663u},
    {"InternetOpenUrl|command_line=int_bin:6", 1472888177u},
    {"InternetOpenUrl|handle=reg:hklm", 1847214633u},
    {"LdrLoadDll|flags=int_bin:18", 1447877779u},
    {"CreateProcessInternal|url=cmd", 915821333u},
    {"connect|path=int_bin:18", 2762359599u},
    {"InternetOpenUrl|handle=programfiles", 2188072518u},
    {"send|flags=int_bin:18", 320541642u},
    {"RegSetValue|buffer=int_bin:3", 4254888475u},
    {"LdrLoadDll|buffer=int_bin:15", 1139694904u},
    {"send|handle=generic_path", 2070373289u},
    {"RegSetValue|size=system32", 2003131761u},
    {"RegSetValue|command_line=url", 1392715161u},
    {"connect|url=url", 616930479u},
    {"RegSetValue|path=system32", 2656290274u},
    {"LdrLoadDll|size=int_bin:12", 2761788154u},
    {"NtAllocateVirtualMemory|flags=int_bin:0", 2514063346u},
    {"CreateProcessInternal|url=reg:hkcu", 3236414602u},
    {"send|size=temp", 2758034342u},
    {"InternetOpenUrl|command_line=int_bin:27", 3978580987u},
    {"send|size=int_bin:24", 930408044u},
    {"RegSetValue|path=int_bin:15", 33366270u},
    {"RegSetValue|path=url", 4108188138u},
    {"RegSetValue|size=int_bin:18", 4136421017u},
    {"LdrLoadDll|path=int_bin:3", 4169258975u},
    {"connect|handle=int_bin:24", 4262058736u},
    {"NtCreateFile|flags=cmd", 18441394u},
    {"NtAllocateVirtualMemory|path=programfiles", 519414729u},
    {"connect|path=windows", 3194384839u},
    {"connect|url=int_bin:30", 3166763594u},
    {"CreateProcessInternal|key=int_bin:15", 1346908764u},
    {"connect|flags=int_bin:21", 1210735280u},
    {"NtAllocateVirtualMemory|flags=int_bin:15", 1993505933u},
    {"RegSetValue|buffer=programfiles", 2103358254u},
    {"send|command_line=int_bin:3", 3001226927u},
    {"LdrLoadDll|flags=int_bin:12", 119451748u},
    {"LdrLoadDll|flags=int_bin:0", 832634946u},
    {"LdrLoadDll|size=int_bin:6", 1464728754u},
    {"RegSetValue|key=url", 2327587488u},
    {"connect|flags=programfiles", 3612938103u},
    {"send|command_line=generic_path", 930560094u},
    {"CreateProcessInternal|size=int_bin:12", 1454741857u},
    {"send|url=int_bin:12", 965914625u},
    {"CreateProcessInternal|url=int_bin:3", 2442713838u},
};
