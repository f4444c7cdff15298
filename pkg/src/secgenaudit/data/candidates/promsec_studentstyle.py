import base64
import cPickle

class AuthHandler:
    class AuthFail(Exception):
        pass

    @staticmethod
    def confirmAuth(headers):
        if 'Authorization' not in headers:
            raise AuthHandler.AuthFail("Authorization token not found")

        try:
            decoded_value = base64.b64decode(headers['Authorization'])
            unpickled_value = cPickle.loads(decoded_value)
        except:
            raise AuthHandler.AuthFail("Failed to confirm authorization")
